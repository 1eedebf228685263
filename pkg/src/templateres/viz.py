"""Overlay and raster rendering of per-pixel resolution fields.

The headline visualization draws, at every sampled template pixel with a
usable gradient, a bar of length twice the local bandwidth, centered on
the pixel and aligned with the local gradient direction (orthogonal to
the template's level sets). Bars are colored by bandwidth on a fixed
cool-to-warm ramp. 3D fields are shown one axis-aligned plane at a time
with gradients projected into the plane. Output formats are plain SVG
(bars as line elements over an embedded grayscale PNG) and binary PPM
rasters; both are byte-deterministic for fixed input.
"""

from __future__ import annotations

import base64
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .grid import ImageGrid
from .smoothing import gaussian_derivative

__all__ = [
    "SliceSpec",
    "Bar",
    "BarOverlay",
    "template_gradient",
    "build_overlay",
    "render_overlay_svg",
    "render_heatmap",
]

# Default relative gradient threshold: exact zeros never happen in floats,
# so "no bar at zero gradient" needs an explicit cutoff.
REL_EPS_GRAD = 1e-3


@dataclass(frozen=True)
class SliceSpec:
    """An axis-aligned plane of a 3D volume: ``axis`` is dropped at ``index``."""

    axis: int
    index: int


@dataclass(frozen=True)
class Bar:
    center: tuple[float, float]  # (row, col) in plane pixel coordinates
    direction: tuple[float, float]  # unit vector, (d_row, d_col)
    half_length: float
    value: float


@dataclass(frozen=True)
class BarOverlay:
    bars: tuple[Bar, ...]
    plane_shape: tuple[int, int]
    slice_spec: SliceSpec | None = None


def template_gradient(template: ImageGrid, sigma_g: float) -> list[ImageGrid]:
    """Per-axis smoothed derivative fields of the template."""
    return [gaussian_derivative(template, sigma_g, axis) for axis in range(template.dim)]


def _check_slice(shape: tuple[int, ...], spec: SliceSpec) -> None:
    if not 0 <= spec.axis < len(shape):
        raise InvalidInputError(f"slice axis {spec.axis} out of range for shape {shape}")
    if not 0 <= spec.index < shape[spec.axis]:
        raise InvalidInputError(
            f"slice index {spec.index} out of range for axis of size {shape[spec.axis]}"
        )


def _extract_plane(data: np.ndarray, spec: SliceSpec | None) -> np.ndarray:
    if data.ndim < 3:
        if spec is not None:
            raise InvalidInputError("slice_spec is only meaningful for 3d fields")
        return data[None, :] if data.ndim == 1 else data
    if spec is None:
        raise InvalidInputError("3d fields require a slice_spec")
    _check_slice(data.shape, spec)
    return np.take(data, spec.index, axis=spec.axis)


def build_overlay(
    template: ImageGrid,
    sigma_star: ImageGrid,
    sigma_g: float = 1.0,
    eps_grad: float | None = None,
    stride: int | None = None,
    slice_spec: SliceSpec | None = None,
) -> BarOverlay:
    """Collect gradient-aligned bars for every sampled pixel worth drawing.

    A bar is emitted at every ``stride``-th pixel whose (in-plane, for 3D)
    gradient norm reaches ``eps_grad`` and whose bandwidth is positive;
    its direction is the normalized gradient and its half-length the
    bandwidth. ``eps_grad`` defaults to ``1e-3`` of the template intensity
    range, ``stride`` to 2 in 2D and 3 in 3D.
    """
    if template.shape != sigma_star.shape:
        raise InvalidInputError(
            f"template shape {template.shape} != field shape {sigma_star.shape}"
        )
    if template.dim == 1:
        raise InvalidInputError("bar overlays need a 2d image or a 3d slice")
    if template.dim == 2 and slice_spec is not None:
        raise InvalidInputError("slice_spec is only meaningful for 3d templates")
    if template.dim == 3 and slice_spec is None:
        raise InvalidInputError("3d templates require a slice_spec")
    if stride is None:
        stride = 2 if template.dim == 2 else 3
    if stride < 1:
        raise InvalidInputError(f"stride must be >= 1, got {stride}")
    if eps_grad is None:
        lo, hi = template.value_range()
        eps_grad = REL_EPS_GRAD * (hi - lo)

    grads = [g.data for g in template_gradient(template, sigma_g)]

    if template.dim == 2:
        plane_axes = (0, 1)
        g_u = grads[0]
        g_v = grads[1]
        values = sigma_star.data
    else:
        _check_slice(template.shape, slice_spec)
        plane_axes = tuple(ax for ax in range(3) if ax != slice_spec.axis)
        g_u = np.take(grads[plane_axes[0]], slice_spec.index, axis=slice_spec.axis)
        g_v = np.take(grads[plane_axes[1]], slice_spec.index, axis=slice_spec.axis)
        values = np.take(sigma_star.data, slice_spec.index, axis=slice_spec.axis)

    plane_shape = g_u.shape
    bars = []
    for i in range(0, plane_shape[0], stride):
        for j in range(0, plane_shape[1], stride):
            norm = float(np.hypot(g_u[i, j], g_v[i, j]))
            half = float(values[i, j])
            if norm < eps_grad or half <= 0.0:
                continue
            bars.append(
                Bar(
                    center=(float(i), float(j)),
                    direction=(float(g_u[i, j] / norm), float(g_v[i, j] / norm)),
                    half_length=half,
                    value=half,
                )
            )
    return BarOverlay(bars=tuple(bars), plane_shape=plane_shape,
                      slice_spec=slice_spec if template.dim == 3 else None)


# --- color handling --------------------------------------------------------

# Cool-to-warm diverging ramp (blue -> light gray -> red), linearly
# interpolated to 256 entries. Anchors follow the widely used smooth
# diverging palette for scalar fields.
_COLOR_ANCHORS = np.array(
    [
        (59, 76, 192),
        (98, 130, 234),
        (141, 176, 254),
        (184, 208, 249),
        (221, 221, 221),
        (245, 196, 173),
        (244, 154, 123),
        (222, 96, 77),
        (180, 4, 38),
    ],
    dtype=np.float64,
)


def _build_lut() -> np.ndarray:
    positions = np.linspace(0.0, 1.0, len(_COLOR_ANCHORS))
    xs = np.linspace(0.0, 1.0, 256)
    channels = [np.interp(xs, positions, _COLOR_ANCHORS[:, c]) for c in range(3)]
    return np.clip(np.rint(np.stack(channels, axis=1)), 0, 255).astype(np.uint8)


_LUT = _build_lut()


def _colors_for(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    span = hi - lo
    if span <= 0:
        idx = np.zeros(values.shape, dtype=np.intp)
    else:
        idx = np.clip(np.rint((values - lo) / span * 255), 0, 255).astype(np.intp)
    return _LUT[idx]


def _hex_color(rgb) -> str:
    return "#{:02x}{:02x}{:02x}".format(int(rgb[0]), int(rgb[1]), int(rgb[2]))


# --- encoders ---------------------------------------------------------------


def _png_chunk(tag: bytes, payload: bytes) -> bytes:
    return (
        struct.pack(">I", len(payload))
        + tag
        + payload
        + struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF)
    )


def _png_gray(levels: np.ndarray) -> bytes:
    """Minimal 8-bit grayscale PNG encoder (filter type 0 on every row)."""
    h, w = levels.shape
    raw = b"".join(b"\x00" + levels[i].tobytes() for i in range(h))
    header = struct.pack(">IIBBBBB", w, h, 8, 0, 0, 0, 0)
    return (
        b"\x89PNG\r\n\x1a\n"
        + _png_chunk(b"IHDR", header)
        + _png_chunk(b"IDAT", zlib.compress(raw, 6))
        + _png_chunk(b"IEND", b"")
    )


def _to_levels(plane: np.ndarray) -> np.ndarray:
    lo = float(plane.min())
    hi = float(plane.max())
    if hi <= lo:
        return np.zeros(plane.shape, dtype=np.uint8)
    return np.clip(np.rint((plane - lo) / (hi - lo) * 255), 0, 255).astype(np.uint8)


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def render_overlay_svg(
    template: ImageGrid,
    overlay: BarOverlay,
    colormap_range: tuple[float, float] | None = None,
) -> bytes:
    """Render bars over the (grayscale) template as an SVG document.

    Geometry is in pixel units: the template occupies ``[0, w] x [0, h]``
    with pixel centers at half-integers, and every bar is a line element
    whose endpoints are ``half_length`` away from the center on either
    side. A vertical color legend sits to the right of the image.
    """
    plane = _extract_plane(template.data, overlay.slice_spec)
    if plane.shape != overlay.plane_shape:
        raise InvalidInputError(
            f"template plane {plane.shape} does not match overlay {overlay.plane_shape}"
        )
    h, w = plane.shape
    if colormap_range is None:
        if overlay.bars:
            values = [bar.value for bar in overlay.bars]
            colormap_range = (min(values), max(values))
        else:
            colormap_range = (0.0, 1.0)
    lo, hi = float(colormap_range[0]), float(colormap_range[1])

    legend_x = w + 1.0
    legend_w = max(1.0, w / 24.0)
    total_w = legend_x + legend_w * 4.5
    display_scale = max(1, int(np.ceil(640.0 / max(h, total_w))))

    out = []
    out.append(
        '<svg xmlns="http://www.w3.org/2000/svg" '
        f'viewBox="0 0 {_fmt(total_w)} {_fmt(float(h))}" '
        f'width="{_fmt(total_w * display_scale)}" height="{h * display_scale}">'
    )
    png64 = base64.b64encode(_png_gray(_to_levels(plane))).decode("ascii")
    out.append(
        f'<image x="0" y="0" width="{w}" height="{h}" '
        'preserveAspectRatio="none" style="image-rendering:pixelated" '
        f'href="data:image/png;base64,{png64}"/>'
    )

    stroke_w = max(0.08, min(0.25, h / 150.0))
    for bar in overlay.bars:
        row, col = bar.center
        d_row, d_col = bar.direction
        cx, cy = col + 0.5, row + 0.5
        x1 = cx - bar.half_length * d_col
        y1 = cy - bar.half_length * d_row
        x2 = cx + bar.half_length * d_col
        y2 = cy + bar.half_length * d_row
        color = _hex_color(_colors_for(np.array(bar.value), lo, hi))
        out.append(
            f'<line x1="{_fmt(x1)}" y1="{_fmt(y1)}" x2="{_fmt(x2)}" y2="{_fmt(y2)}" '
            f'stroke="{color}" stroke-width="{_fmt(stroke_w)}" stroke-linecap="round"/>'
        )

    # Legend: vertical ramp, warm on top.
    n_steps = 48
    seg_h = h / n_steps
    for k in range(n_steps):
        frac = 1.0 - (k + 0.5) / n_steps
        color = _hex_color(_colors_for(np.array(lo + frac * (hi - lo)), lo, hi))
        out.append(
            f'<rect x="{_fmt(legend_x)}" y="{_fmt(k * seg_h)}" '
            f'width="{_fmt(legend_w)}" height="{_fmt(seg_h * 1.02)}" fill="{color}"/>'
        )
    font = max(1.0, h / 18.0)
    text_x = legend_x + legend_w * 1.3
    out.append(
        f'<text x="{_fmt(text_x)}" y="{_fmt(font)}" font-size="{_fmt(font)}" '
        f'font-family="sans-serif">{_fmt(hi)}</text>'
    )
    out.append(
        f'<text x="{_fmt(text_x)}" y="{_fmt(float(h))}" font-size="{_fmt(font)}" '
        f'font-family="sans-serif">{_fmt(lo)}</text>'
    )
    out.append("</svg>")
    return "\n".join(out).encode("utf-8")


def render_heatmap(field: ImageGrid, slice_spec: SliceSpec | None = None) -> bytes:
    """Binary PPM (P6) raster of a field through the color ramp.

    Values are mapped linearly from the displayed plane's min-max range;
    a constant plane maps to the low end of the ramp. 1D fields render as
    a single pixel row.
    """
    plane = _extract_plane(field.data, slice_spec)
    h, w = plane.shape
    lo = float(plane.min())
    hi = float(plane.max())
    rgb = _colors_for(plane, lo, hi)
    return b"P6\n%d %d\n255\n" % (w, h) + rgb.astype(np.uint8).tobytes()
