"""Deterministic synthetic app recordings with scripted ground truth.

Screens are flat-color mock UIs (header, scrollable element grid, nav bar)
rendered straight into numpy rasters. A script walks a screen stack the
same way the segmenter's backward resolution does: taps push a derived
detail screen, scrolls move the viewport of the current screen, backward
pops. Rendering a script yields the frame series plus the exact shots and
action scenes it should segment into, which powers every oracle test and
the desk-scale training corpus.

Everything is a pure function of the seed: same seed, same bytes.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from .types import (
    ActionScene,
    ActionType,
    BoundingBox,
    Frame,
    FrameSeries,
    Shot,
    TransitionSample,
    UiElement,
    UiHierarchy,
    ValidationError,
)

# Element fills chosen for spread in luminance as well as hue, so any two
# color assignments differ on the luma plane the similarity metric reads.
_PALETTE = [
    (214, 69, 65),
    (230, 126, 34),
    (241, 196, 15),
    (39, 174, 96),
    (22, 160, 133),
    (41, 128, 185),
    (142, 68, 173),
    (44, 62, 80),
    (52, 152, 219),
    (46, 204, 113),
    (120, 66, 18),
    (236, 240, 241),
]
_BACKGROUNDS = [
    (244, 244, 248),
    (236, 240, 241),
    (248, 242, 235),
    (225, 228, 221),
    (210, 215, 224),
    (252, 248, 240),
    (232, 225, 238),
    (218, 226, 230),
]
# Mid-gray, far from every screen background: the cut into a loading flash
# must break the steady threshold on both sides.
_LOADING_BG = (96, 100, 108)

HEADER_H_FRAC = 0.11
NAV_H_FRAC = 0.05


@dataclass(frozen=True)
class TapStep:
    target: int  # element index on the current screen; must be fully visible


@dataclass(frozen=True)
class ScrollStep:
    dy: int  # viewport shift in px; positive scrolls content upward on screen


@dataclass(frozen=True)
class BackStep:
    pass


ScriptStep = Union[TapStep, ScrollStep, BackStep]


@dataclass(frozen=True)
class Script:
    steps: tuple[ScriptStep, ...]
    seed: int = 0
    fps: float = 30.0
    width: int = 180
    height: int = 320
    steady_s: float = 1.5
    noise_amp: int = 0  # uniform +-amp per-pixel flicker, 0 = clean
    loading_taps: bool = True  # some taps show a brief sub-threshold loading screen

    def __post_init__(self):
        if self.steady_s <= 0:
            raise ValidationError("steady_s must be > 0")
        object.__setattr__(self, "steps", tuple(self.steps))


@dataclass(frozen=True)
class ScreenElement:
    x: int
    y: int  # canvas coordinates within the scrollable content
    w: int
    h: int
    color: tuple[int, int, int]
    kind: str  # "tab" | "button" | "list_item" | "switch"
    label: str = ""
    on: bool = True


@dataclass(frozen=True)
class MockScreen:
    uid: int
    bg: tuple[int, int, int]
    header_color: tuple[int, int, int]
    elements: tuple[ScreenElement, ...]
    canvas_h: int
    scroll_y: int = 0


def _rng_for(seed: int, *streams: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *streams]))


class ScreenFactory:
    """Deterministic screen construction shared by scripts and the renderer."""

    def __init__(self, seed: int, width: int, height: int):
        self.seed = seed
        self.width = width
        self.height = height
        self.header_h = round(height * HEADER_H_FRAC)
        self.nav_h = round(height * NAV_H_FRAC)
        self.content_h = height - self.header_h - self.nav_h
        self._canvas_cache: dict[tuple, np.ndarray] = {}

    def make_screen(self, uid: int, banner: Optional[tuple[int, int, int]] = None) -> MockScreen:
        """Build a mock screen whose layout and palette vary per uid.

        Structural diversity is deliberate: two distinct screens must look
        clearly different on the luminance plane, and rows within one
        screen must not repeat periodically, or shot cuts and template
        matching lose their anchors.
        """
        rng = _rng_for(self.seed, 1, uid)
        w = self.width
        bg = _BACKGROUNDS[int(rng.integers(len(_BACKGROUNDS)))]
        header = banner if banner is not None else _PALETTE[int(rng.integers(len(_PALETTE)))]
        canvas_h = int(self.content_h * 2.5)
        margin = int(rng.integers(round(w * 0.04), round(w * 0.1)))
        # Vertical gaps keep element centers comfortably farther apart than
        # the clustering radius used downstream, so predictions for adjacent
        # elements land in distinct clusters.
        gap = int(rng.integers(round(w * 0.078), round(w * 0.105)))
        colors = rng.permutation(len(_PALETTE))
        elements: list[ScreenElement] = []
        y = int(rng.integers(4, gap + 5))
        color_i = 0

        def next_color() -> tuple[int, int, int]:
            nonlocal color_i
            c = _PALETTE[colors[color_i % len(colors)]]
            color_i += 1
            return c

        # Optional tab row: equal-size siblings, exchange-eligible.
        n_tabs = int(rng.integers(0, 4))
        if n_tabs >= 2:
            tab_w = (w - 2 * margin - (n_tabs - 1) * 6) // n_tabs
            tab_h = int(rng.integers(round(self.content_h * 0.09), round(self.content_h * 0.12)))
            for t in range(n_tabs):
                elements.append(
                    ScreenElement(
                        x=margin + t * (tab_w + 6),
                        y=y,
                        w=tab_w,
                        h=tab_h,
                        color=next_color(),
                        kind="tab",
                        label=f"tab{t}",
                    )
                )
            y += tab_h + gap

        # One switch on roughly a fifth of the screens.
        if rng.random() < 0.2:
            sw = int(rng.integers(round(w * 0.25), round(w * 0.45)))
            sh = int(rng.integers(round(self.content_h * 0.1), round(self.content_h * 0.13)))
            on = bool(rng.random() < 0.5)
            elements.append(
                ScreenElement(
                    x=int(rng.integers(margin, w - margin - sw)),
                    y=y,
                    w=sw,
                    h=sh,
                    color=next_color(),
                    kind="switch",
                    label="on" if on else "off",
                    on=on,
                )
            )
            y += sh + gap

        # Rows down the rest of the canvas: full-width items, card pairs,
        # and narrow buttons, with per-row heights so nothing repeats.
        while y < canvas_h - round(self.content_h * 0.2):
            row_h = int(rng.integers(round(self.content_h * 0.16), round(self.content_h * 0.23)))
            if y + row_h > canvas_h - 4:
                break
            style = rng.random()
            if style < 0.25:
                half = (w - 2 * margin - gap) // 2
                for c in range(2):
                    elements.append(
                        ScreenElement(
                            x=margin + c * (half + gap),
                            y=y,
                            w=half,
                            h=row_h,
                            color=next_color(),
                            kind="list_item",
                            label=f"card{len(elements)}",
                        )
                    )
            elif style < 0.4:
                bw = int(rng.integers(round(w * 0.3), round(w * 0.6)))
                elements.append(
                    ScreenElement(
                        x=int(rng.integers(margin, w - margin - bw)),
                        y=y,
                        w=bw,
                        h=row_h,
                        color=next_color(),
                        kind="button",
                        label=f"btn{len(elements)}",
                    )
                )
            else:
                elements.append(
                    ScreenElement(
                        x=margin,
                        y=y,
                        w=w - 2 * margin,
                        h=row_h,
                        color=next_color(),
                        kind="list_item",
                        label=f"item{len(elements)}",
                    )
                )
            y += row_h + gap

        return MockScreen(uid=uid, bg=bg, header_color=header, elements=tuple(elements), canvas_h=canvas_h)

    def make_detail(self, parent: MockScreen, target: ScreenElement, uid: int) -> MockScreen:
        # The detail page advertises the tapped element: its banner takes
        # the element's fill color, the background is tinted heavily toward
        # it, and the body content is neutral so the screen reads as "the
        # <color> page". This is what makes the transition identifiable
        # from the image pair alone.
        screen = self.make_screen(uid, banner=target.color)
        tinted = tuple(round(b * 0.2 + c * 0.8) for b, c in zip(screen.bg, target.color))
        rng = _rng_for(self.seed, 5, uid)
        neutral_elements = []
        for el in screen.elements:
            shade = int(rng.integers(185, 240))
            neutral_elements.append(replace(el, color=(shade, shade, shade + 8)))
        return replace(screen, bg=tinted, elements=tuple(neutral_elements))

    def toggle_switch(self, screen: MockScreen, index: int) -> MockScreen:
        el = screen.elements[index]
        flipped = replace(el, on=not el.on, label="off" if el.on else "on")
        elements = list(screen.elements)
        elements[index] = flipped
        return replace(screen, elements=tuple(elements))

    # -- rasterization ------------------------------------------------------

    def _draw_element(self, canvas: np.ndarray, el: ScreenElement) -> None:
        x0, y0, x1, y1 = el.x, el.y, el.x + el.w, el.y + el.h
        border = tuple(max(0, c - 90) for c in el.color)
        canvas[y0:y1, x0:x1] = border
        fill = el.color if (el.kind != "switch" or el.on) else tuple(c // 3 for c in el.color)
        canvas[y0 + 2 : y1 - 2, x0 + 2 : x1 - 2] = fill
        # Deterministic per-element decoration (a "text" block, optionally an
        # icon square) keyed off the geometry, so every element has its own
        # internal structure and rows never repeat pixel-for-pixel.
        variant = (el.x * 31 + el.y * 17 + el.w * 7 + el.h) % 4
        text_color = tuple(max(0, c - 140) for c in fill)
        tx = x0 + 8
        if variant == 0 and el.w > 40 and el.h > 18:
            icon = tuple(min(255, c + 60) for c in border)
            ih = min(el.h - 10, 18)
            canvas[y0 + 5 : y0 + 5 + ih, x0 + 6 : x0 + 6 + ih] = icon
            tx = x0 + 6 + ih + 6
        widths = [[0.7, 0.45, 0.6], [0.5, 0.8], [0.65, 0.3, 0.5, 0.4], [0.85, 0.55]][variant]
        line_h = 3
        ty = y0 + 6
        for frac in widths:
            if ty + line_h >= y1 - 4:
                break
            tw = max(4, int((x1 - tx - 8) * frac))
            canvas[ty : ty + line_h, tx : tx + tw] = text_color
            ty += line_h + 4

    def render_canvas(self, screen: MockScreen) -> np.ndarray:
        key = (screen.uid, screen.elements, screen.bg)
        cached = self._canvas_cache.get(key)
        if cached is not None:
            return cached
        canvas = np.empty((screen.canvas_h, self.width, 3), dtype=np.uint8)
        canvas[:] = screen.bg
        # Horizontal hairlines at irregular pitch: texture against which
        # vertical motion is unambiguous.
        rng = _rng_for(self.seed, 2, screen.uid)
        ys = np.sort(rng.choice(screen.canvas_h, size=screen.canvas_h // 40, replace=False))
        shade = tuple(max(0, c - 14) for c in screen.bg)
        for yy in ys:
            canvas[yy : yy + 1] = shade
        for el in screen.elements:
            self._draw_element(canvas, el)
        self._canvas_cache[key] = canvas
        return canvas

    def render_screen(self, screen: MockScreen, scroll_y: Optional[float] = None) -> np.ndarray:
        sy = float(screen.scroll_y if scroll_y is None else scroll_y)
        max_scroll = screen.canvas_h - self.content_h
        if not 0 <= sy <= max_scroll:
            raise ValidationError(f"scroll_y {sy} outside [0, {max_scroll}]")
        img = np.empty((self.height, self.width, 3), dtype=np.uint8)
        canvas = self.render_canvas(screen)
        y0 = int(sy)
        frac = sy - y0
        view = canvas[y0 : y0 + self.content_h]
        if frac > 0.0:
            # Sub-pixel scroll positions sample between adjacent rows, the
            # same way a real compositor animates a decelerating fling.
            nxt = canvas[y0 + 1 : y0 + 1 + self.content_h]
            view = np.rint((1.0 - frac) * view + frac * nxt).astype(np.uint8)
        img[self.header_h : self.header_h + self.content_h] = view
        # Fixed chrome: header with a title block, nav bar with back pill.
        # Title geometry varies with the screen so headers differ even when
        # two screens draw the same banner color.
        img[: self.header_h] = screen.header_color
        title = tuple(min(255, c + 70) for c in screen.header_color)
        tx = 8 + (screen.uid * 13) % (self.width // 4)
        tw = self.width // 3 + (screen.uid * 7) % (self.width // 4)
        img[self.header_h // 3 : self.header_h // 3 + 4, tx : tx + tw] = title
        img[self.height - self.nav_h :] = (28, 28, 32)
        bw, bh = round(self.width * 0.14), max(2, self.nav_h - 8)
        bx = (self.width - bw) // 2
        by = self.height - self.nav_h + (self.nav_h - bh) // 2
        img[by : by + bh, bx : bx + bw] = (200, 200, 205)
        return img

    def render_loading(self, uid: int) -> np.ndarray:
        img = np.empty((self.height, self.width, 3), dtype=np.uint8)
        img[:] = _LOADING_BG
        cx, cy, r = self.width // 2, self.height // 2, round(self.width * 0.06)
        img[cy - r : cy + r, cx - r : cx + r] = (120, 125, 135)
        return img

    def visible_elements(self, screen: MockScreen) -> list[int]:
        """Indices of elements fully inside the current viewport."""
        sy = screen.scroll_y
        out = []
        for i, el in enumerate(screen.elements):
            if el.y >= sy and el.y + el.h <= sy + self.content_h:
                out.append(i)
        return out

    def element_screen_bounds(self, screen: MockScreen, index: int) -> BoundingBox:
        """Normalized on-screen bounds of an element at the current scroll."""
        el = screen.elements[index]
        y0 = el.y - screen.scroll_y + self.header_h
        return BoundingBox(
            x_lower=el.x / self.width,
            y_lower=y0 / self.height,
            x_upper=(el.x + el.w) / self.width,
            y_upper=(y0 + el.h) / self.height,
        )


def _scroll_deltas(total: float) -> list[float]:
    """Decelerating per-frame scroll steps summing exactly to ``total``.

    Built as a geometric ease-out ending at a sub-pixel step: the motion
    slows smoothly into the rest position, which is what makes the
    similarity curve climb gradually for a good fraction of a second --
    the fingerprint that separates scrolls from taps. The final step stays
    just large enough that every moving pair breaks the steady threshold.
    The head of the sequence (fast, perceptually saturated motion) absorbs
    any remainder, capped at a realistic top speed.
    """
    ratio, tail_step, top_speed = 0.88, 0.55, 22.0
    deltas = [tail_step]
    while sum(deltas) < total:
        deltas.append(min(deltas[-1] / ratio, top_speed))
    overshoot = sum(deltas) - total
    while deltas and overshoot >= deltas[-1]:
        overshoot -= deltas.pop()
    if not deltas:
        raise ValidationError(f"scroll of {total}px is too short to animate")
    deltas[-1] -= overshoot
    return list(reversed(deltas))


# Scriptable scroll magnitudes: long enough for a full ease-out fingerprint,
# short enough that the keyframe template search can still recover them.
MIN_SCROLL_PX = 60
MAX_SCROLL_PX = 100


@dataclass(frozen=True)
class RenderedVideo:
    video: FrameSeries
    shots: tuple[Shot, ...]
    scenes: tuple[ActionScene, ...]
    # Ground-truth tapped-element bounds per scene (None for SCROLL).
    tap_bounds: tuple[Optional[BoundingBox], ...]


class _VideoAssembler:
    def __init__(self, script: Script):
        self.script = script
        self.rng = _rng_for(script.seed, 0)
        self.frames: list[np.ndarray] = []
        self.shots: list[Shot] = []

    def add_steady(self, image: np.ndarray, seconds: float) -> Shot:
        n = round(seconds * self.script.fps) + 1
        start = len(self.frames)
        self.frames.extend([image] * n)
        shot = Shot(start, start + n - 1, start + n - 1)
        self.shots.append(shot)
        return shot

    def add_interstitial(self, image: np.ndarray, seconds: float) -> None:
        # Deliberately shorter than the steady duration: it must be rejected
        # by the shot detector's duration rule.
        n = max(2, round(seconds * self.script.fps))
        self.frames.extend([image] * n)

    def add_frames(self, images: list[np.ndarray]) -> None:
        self.frames.extend(images)

    def finish(self) -> FrameSeries:
        fps = self.script.fps
        noise = self.script.noise_amp
        out = []
        for i, img in enumerate(self.frames):
            px = img
            if noise > 0:
                flick = _rng_for(self.script.seed, 3, i).integers(
                    -noise, noise + 1, size=img.shape, dtype=np.int16
                )
                px = np.clip(img.astype(np.int16) + flick, 0, 255).astype(np.uint8)
            out.append(Frame(index=i, timestamp_s=i / fps, pixels=px))
        return FrameSeries(frames=tuple(out), fps=fps, source_id=f"synthetic-{self.script.seed}")


def render_video(script: Script) -> RenderedVideo:
    """Realize a script as frames plus its exact shot/scene ground truth.

    Taps hard-cut to a derived detail screen (sometimes via a brief loading
    flash shorter than the steady rule), scrolls translate the viewport with
    decelerating steps, and backward pops to the previous screen state.
    """
    factory = ScreenFactory(script.seed, script.width, script.height)
    asm = _VideoAssembler(script)
    uid_counter = 0
    stack: list[MockScreen] = [factory.make_screen(uid_counter)]
    uid_counter += 1

    scenes: list[ActionScene] = []
    tap_bounds: list[Optional[BoundingBox]] = []
    prev_shot = asm.add_steady(factory.render_screen(stack[-1]), script.steady_s)

    for step_i, step in enumerate(script.steps):
        current = stack[-1]
        if isinstance(step, TapStep):
            visible = factory.visible_elements(current)
            if step.target not in visible:
                raise ValidationError(
                    f"step {step_i}: tap target {step.target} not fully visible"
                )
            bounds = factory.element_screen_bounds(current, step.target)
            target_el = current.elements[step.target]
            if target_el.kind == "switch":
                # A switch flip changes too few pixels to break the steady
                # threshold, so it cannot appear as a scene in a recording.
                raise ValidationError(
                    f"step {step_i}: switch taps are not segmentable in videos"
                )
            nxt = factory.make_detail(current, target_el, uid_counter)
            uid_counter += 1
            stack.append(nxt)
            if script.loading_taps and asm.rng.random() < 0.3:
                asm.add_interstitial(factory.render_loading(uid_counter), 0.4)
            shot = asm.add_steady(factory.render_screen(nxt), script.steady_s)
            scenes.append(
                ActionScene(
                    from_shot=prev_shot,
                    to_shot=shot,
                    action=ActionType.TAP,
                    tap_location=bounds.center,
                )
            )
            tap_bounds.append(bounds)
            prev_shot = shot
        elif isinstance(step, ScrollStep):
            max_scroll = current.canvas_h - factory.content_h
            target_y = current.scroll_y + step.dy
            if not 0 <= target_y <= max_scroll:
                raise ValidationError(f"step {step_i}: scroll to {target_y} out of range")
            deltas = _scroll_deltas(abs(step.dy))
            sign = 1.0 if step.dy > 0 else -1.0
            y = float(current.scroll_y)
            moved = []
            # The final position equals the target and is rendered by the
            # following steady block, so the motion stops one step short.
            for d in deltas[:-1]:
                y += sign * d
                moved.append(factory.render_screen(current, scroll_y=y))
            asm.add_frames(moved)
            nxt = replace(current, scroll_y=target_y)
            stack[-1] = nxt
            shot = asm.add_steady(factory.render_screen(nxt), script.steady_s)
            scenes.append(
                ActionScene(
                    from_shot=prev_shot,
                    to_shot=shot,
                    action=ActionType.SCROLL,
                    scroll_offset=(0.0, float(-step.dy)),
                )
            )
            tap_bounds.append(None)
            prev_shot = shot
        elif isinstance(step, BackStep):
            if len(stack) < 2:
                raise ValidationError(f"step {step_i}: backward with no previous screen")
            stack.pop()
            nxt = stack[-1]
            shot = asm.add_steady(factory.render_screen(nxt), script.steady_s)
            scenes.append(
                ActionScene(from_shot=prev_shot, to_shot=shot, action=ActionType.BACKWARD)
            )
            tap_bounds.append(None)
            prev_shot = shot
        else:
            raise ValidationError(f"unknown script step {step!r}")

    return RenderedVideo(
        video=asm.finish(),
        shots=tuple(asm.shots),
        scenes=tuple(scenes),
        tap_bounds=tuple(tap_bounds),
    )


def random_script(
    seed: int,
    n_actions: int = 5,
    width: int = 180,
    height: int = 320,
    fps: float = 30.0,
    noise_amp: int = 0,
) -> Script:
    """A feasible random script with the requested number of actions.

    Mixes the three action types, scheduling scrolls and backwards whenever
    the walk allows them, so any script of five or more actions exercises
    every type with overwhelming probability.
    """
    rng = _rng_for(seed, 9)
    factory = ScreenFactory(seed, width, height)
    steps: list[ScriptStep] = []
    uid_counter = 0
    stack = [factory.make_screen(uid_counter)]
    uid_counter += 1

    for _ in range(n_actions):
        current = stack[-1]
        max_scroll = current.canvas_h - factory.content_h
        can_scroll_down = current.scroll_y + MIN_SCROLL_PX <= max_scroll
        can_scroll_up = current.scroll_y - MIN_SCROLL_PX >= 0
        can_back = len(stack) >= 2
        choices = ["tap"] * 5
        if can_scroll_down or can_scroll_up:
            choices += ["scroll"] * 3
        if can_back:
            choices += ["back"] * 3
        kind = choices[int(rng.integers(len(choices)))]

        if kind == "scroll":
            down = can_scroll_down and (not can_scroll_up or rng.random() < 0.7)
            limit = (max_scroll - current.scroll_y) if down else current.scroll_y
            mag = int(rng.integers(MIN_SCROLL_PX, min(limit, MAX_SCROLL_PX) + 1))
            dy = mag if down else -mag
            steps.append(ScrollStep(dy))
            stack[-1] = replace(current, scroll_y=current.scroll_y + dy)
        elif kind == "back":
            steps.append(BackStep())
            stack.pop()
        else:
            candidates = [
                i
                for i in factory.visible_elements(current)
                if current.elements[i].kind != "switch"
            ]
            target = int(candidates[int(rng.integers(len(candidates)))])
            steps.append(TapStep(target))
            stack.append(factory.make_detail(current, current.elements[target], uid_counter))
            uid_counter += 1

    return Script(
        steps=tuple(steps),
        seed=seed,
        fps=fps,
        width=width,
        height=height,
        noise_amp=noise_amp,
        steady_s=float(1.2 + 0.6 * rng.random()),
    )


# ---------------------------------------------------------------------------
# Transition dataset for the tap model


def _hierarchy_for(factory: ScreenFactory, screen: MockScreen) -> UiHierarchy:
    w, h = factory.width, factory.height
    sy = screen.scroll_y

    def el_bounds(el: ScreenElement) -> Optional[BoundingBox]:
        y0 = el.y - sy + factory.header_h
        y1 = y0 + el.h
        if y0 < factory.header_h or y1 > h - factory.nav_h:
            return None  # off-screen or clipped: leave out of the tree
        return BoundingBox(el.x / w, y0 / h, (el.x + el.w) / w, y1 / h)

    tabs, switches, items = [], [], []
    for i, el in enumerate(screen.elements):
        b = el_bounds(el)
        if b is None:
            continue
        node = UiElement(class_name=el.kind, bounds=b, text=el.label or None)
        if el.kind == "tab":
            tabs.append(node)
        elif el.kind == "switch":
            switches.append(node)
        else:
            items.append(node)

    groups = []
    if tabs:
        gb = BoundingBox(
            min(t.bounds.x_lower for t in tabs),
            min(t.bounds.y_lower for t in tabs),
            max(t.bounds.x_upper for t in tabs),
            max(t.bounds.y_upper for t in tabs),
        )
        groups.append(UiElement("tab_bar", gb, group_role="tab", children=tuple(tabs)))
    if items:
        gb = BoundingBox(
            min(t.bounds.x_lower for t in items),
            min(t.bounds.y_lower for t in items),
            max(t.bounds.x_upper for t in items),
            max(t.bounds.y_upper for t in items),
        )
        groups.append(UiElement("item_list", gb, group_role="list", children=tuple(items)))
    root = UiElement(
        class_name="screen",
        bounds=BoundingBox(0.0, 0.0, 1.0, 1.0),
        children=tuple(groups + switches),
    )
    return UiHierarchy(root=root)


def render_transition_dataset(
    n: int,
    seed: int = 0,
    width: int = 180,
    height: int = 320,
) -> list[TransitionSample]:
    """``n`` tap transitions with hierarchy metadata and app-block ids.

    Each sample taps one fully visible element; the successor screen is the
    derived detail page (or the toggled screen for switches), so the pair
    deterministically identifies the target. App ids are assigned in small
    blocks so datasets can be split at app granularity without leakage.
    """
    if n < 1:
        raise ValidationError("dataset size must be >= 1")
    factory = ScreenFactory(seed, width, height)
    app_sizes = [7, 7, 6]
    samples: list[TransitionSample] = []
    app_index = 0
    remaining_in_app = app_sizes[0]
    for i in range(n):
        rng = _rng_for(seed, 4, i)
        screen = factory.make_screen(uid=10_000 + 2 * i)
        visible = factory.visible_elements(screen)
        target = int(visible[int(rng.integers(len(visible)))])
        el = screen.elements[target]
        if el.kind == "switch":
            nxt = factory.toggle_switch(screen, target)
        else:
            nxt = factory.make_detail(screen, el, uid=10_000 + 2 * i + 1)
        samples.append(
            TransitionSample(
                ui1_image=factory.render_screen(screen),
                ui2_image=factory.render_screen(nxt),
                gt_bounds=factory.element_screen_bounds(screen, target),
                app_id=f"app-{app_index:03d}",
                hierarchy=_hierarchy_for(factory, screen),
            )
        )
        remaining_in_app -= 1
        if remaining_in_app == 0:
            app_index += 1
            remaining_in_app = app_sizes[app_index % len(app_sizes)]
    return samples
