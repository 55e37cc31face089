"""Rasterize frames to 480x360 RGB images.

Sprites draw as solid rectangles of their costume's declared fill color,
scaled by size and stacked by layer; the stage fills the background.  PPM
(P6) is the internal byte format because it is trivially deterministic; PNG
is produced at the CLI/API boundary via Pillow.
"""

import io

from .trace import keyframe_ticks

WIDTH = 480
HEIGHT = 360


class Image:
    def __init__(self, width=WIDTH, height=HEIGHT, fill=(255, 255, 255)):
        self.width = width
        self.height = height
        self.pixels = bytearray(bytes(fill) * (width * height))

    def fill_rect(self, left, top, right, bottom, color):
        left = max(0, min(self.width, int(left)))
        right = max(0, min(self.width, int(right)))
        top = max(0, min(self.height, int(top)))
        bottom = max(0, min(self.height, int(bottom)))
        if right <= left or bottom <= top:
            return
        row = bytes(color) * (right - left)
        for y in range(top, bottom):
            start = (y * self.width + left) * 3
            self.pixels[start:start + len(row)] = row

    def pixel(self, x, y):
        start = (y * self.width + x) * 3
        return tuple(self.pixels[start:start + 3])

    def to_ppm(self):
        header = ("P6 %d %d 255\n" % (self.width, self.height)).encode("ascii")
        return header + bytes(self.pixels)

    def to_png(self):
        from PIL import Image as PilImage

        img = PilImage.frombytes("RGB", (self.width, self.height), bytes(self.pixels))
        buf = io.BytesIO()
        img.save(buf, format="PNG")
        return buf.getvalue()


def _stage_color(project):
    stage = project.stage
    if stage is not None:
        costume = stage.costume()
        if costume is not None:
            return tuple(costume.fill_color)
    return (245, 245, 245)


def _sprite_color(project, snap):
    target = project.target(snap.sprite)
    if target is None:
        return (128, 128, 128)
    for costume in target.costumes:
        if costume.name == snap.costume:
            return tuple(costume.fill_color)
    costume = target.costume()
    return tuple(costume.fill_color) if costume else (128, 128, 128)


def rasterize(frame, project):
    """One frame to one Image; deterministic bytes for identical frames."""
    img = Image(fill=_stage_color(project))
    order = sorted(range(len(frame.sprites)),
                   key=lambda i: (frame.sprites[i].layer, i))
    for i in order:
        snap = frame.sprites[i]
        if not snap.visible:
            continue
        cx = WIDTH / 2 + snap.x
        cy = HEIGHT / 2 - snap.y
        img.fill_rect(cx - snap.width / 2, cy - snap.height / 2,
                      cx + snap.width / 2, cy + snap.height / 2,
                      _sprite_color(project, snap))
    return img


def keyframes(trace, project, budget):
    """(tick, Image) pairs for the trace's most informative frames."""
    ticks = keyframe_ticks(trace, budget)
    by_tick = {f.tick: f for f in trace.frames}
    return [(tick, rasterize(by_tick[tick], project)) for tick in ticks if tick in by_tick]
