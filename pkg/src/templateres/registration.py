"""Groupwise registration of an image stack with affine or rigid maps.

The registered stack and its template are found by alternating
minimization of

    sum_i  L_sim(I_i warped by the inverse of Psi_i, T)  +  lam * L_reg

where L_sim is a squared-L2 or L1 pixel sum and L_reg penalizes the
deviation of the inverse maps from the identity. With the transforms
frozen the optimal template is the pixelwise mean (L2) or median (L1) of
the registered images, which is used directly; with the template frozen
each transform is improved by a few steps of finite-difference gradient
descent with backtracking line search on its low-dimensional parameter
vector. A two-level coarse-to-fine pyramid avoids the worst local minima.

Transforms act on pixel coordinates as ``x -> A x + b``. Internally the
optimizer uses a parametrization centered on the grid midpoint and scaled
so that one parameter unit moves edge pixels by about one pixel, which
keeps a single step size meaningful for angles, matrix entries and
translations alike. The stored transforms are always the literal (A, b).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .errors import InvalidInputError, InvalidTransformError
from .grid import ImageGrid, ImageStack, _interpolate_zero_outside
from .smoothing import smooth_array

__all__ = [
    "Transform",
    "StepSchedule",
    "RegistrationConfig",
    "RegistrationResult",
    "warp",
    "similarity",
    "regularizer",
    "groupwise_register",
]

_DET_FLOOR = 1e-8
_NORMS = ("l2", "l1")
_KINDS = ("affine", "rigid")

# Finite-difference step in scaled parameter units (about 1e-3 px of
# displacement); small enough for 1% stencil agreement, large enough to
# stay clear of float cancellation.
_FD_STEP = 1e-3
_ARMIJO = 1e-4
_MAX_BACKTRACKS = 30


def _rotation_matrix(angles: np.ndarray, dim: int) -> np.ndarray:
    if dim == 2:
        c, s = math.cos(angles[0]), math.sin(angles[0])
        return np.array([[c, -s], [s, c]])
    a, b, g = angles
    ca, sa = math.cos(a), math.sin(a)
    cb, sb = math.cos(b), math.sin(b)
    cg, sg = math.cos(g), math.sin(g)
    r0 = np.array([[1, 0, 0], [0, ca, -sa], [0, sa, ca]])  # about axis 0
    r1 = np.array([[cb, 0, sb], [0, 1, 0], [-sb, 0, cb]])  # about axis 1
    r2 = np.array([[cg, -sg, 0], [sg, cg, 0], [0, 0, 1]])  # about axis 2
    return r2 @ r1 @ r0


@dataclass(frozen=True, eq=False)
class Transform:
    """A spatial map ``x -> A x + b`` in pixel coordinates.

    For rigid transforms the angle parametrization is authoritative and A
    is regenerated from it, so orthogonality holds by construction (one
    angle in 2D; three axis rotations composed as R2 R1 R0 in 3D).
    """

    kind: str
    matrix: np.ndarray
    translation: np.ndarray
    angles: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise InvalidInputError(f"unknown transform kind {self.kind!r}")
        a = np.array(self.matrix, dtype=np.float64, copy=True)
        b = np.array(self.translation, dtype=np.float64, copy=True).reshape(-1)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] != b.shape[0]:
            raise InvalidInputError("matrix and translation dimensions disagree")
        if a.shape[0] not in (1, 2, 3):
            raise InvalidInputError("only 1d, 2d and 3d transforms are supported")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise InvalidTransformError("transform parameters must be finite")
        if abs(np.linalg.det(a)) <= _DET_FLOOR:
            raise InvalidTransformError("transform matrix is singular")
        if self.kind == "rigid":
            if self.angles is None:
                raise InvalidInputError("rigid transforms require angles")
            ang = np.array(self.angles, dtype=np.float64, copy=True).reshape(-1)
            a = _rotation_matrix(ang, b.shape[0])
            ang.flags.writeable = False
            object.__setattr__(self, "angles", ang)
        a.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "matrix", a)
        object.__setattr__(self, "translation", b)

    @classmethod
    def affine(cls, matrix, translation) -> "Transform":
        return cls(kind="affine", matrix=matrix, translation=translation)

    @classmethod
    def rigid(cls, angles, translation) -> "Transform":
        dim = len(np.atleast_1d(translation))
        ang = np.atleast_1d(np.asarray(angles, dtype=np.float64))
        expected = 1 if dim == 2 else 3
        if ang.shape[0] != expected:
            raise InvalidInputError(
                f"rigid {dim}d transforms take {expected} angle(s), got {ang.shape[0]}"
            )
        return cls(
            kind="rigid",
            matrix=_rotation_matrix(ang, dim),
            translation=translation,
            angles=ang,
        )

    @classmethod
    def identity(cls, kind: str, dim: int) -> "Transform":
        if kind == "rigid":
            return cls.rigid(np.zeros(1 if dim == 2 else 3), np.zeros(dim))
        return cls.affine(np.eye(dim), np.zeros(dim))

    @property
    def dim(self) -> int:
        return self.translation.shape[0]

    def apply(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return pts @ self.matrix.T + self.translation

    def inverse_matrix(self) -> np.ndarray:
        if self.kind == "rigid":
            return self.matrix.T
        return np.linalg.inv(self.matrix)


@lru_cache(maxsize=32)
def _pixel_coords(shape: tuple[int, ...]) -> np.ndarray:
    coords = np.indices(shape, dtype=np.float64).reshape(len(shape), -1).T
    coords = np.ascontiguousarray(coords)
    coords.flags.writeable = False
    return coords


def _det_small(a: np.ndarray) -> float:
    d = a.shape[0]
    if d == 1:
        return float(a[0, 0])
    if d == 2:
        return float(a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0])
    return float(
        a[0, 0] * (a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1])
        - a[0, 1] * (a[1, 0] * a[2, 2] - a[1, 2] * a[2, 0])
        + a[0, 2] * (a[1, 0] * a[2, 1] - a[1, 1] * a[2, 0])
    )


def _inv_small(a: np.ndarray, det: float) -> np.ndarray:
    """Closed-form inverse for 1x1 / 2x2 / 3x3; far cheaper than LAPACK here."""
    d = a.shape[0]
    if d == 1:
        return np.array([[1.0 / det]])
    if d == 2:
        return np.array([[a[1, 1], -a[0, 1]], [-a[1, 0], a[0, 0]]]) / det
    adj = np.array(
        [
            [
                a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1],
                a[0, 2] * a[2, 1] - a[0, 1] * a[2, 2],
                a[0, 1] * a[1, 2] - a[0, 2] * a[1, 1],
            ],
            [
                a[1, 2] * a[2, 0] - a[1, 0] * a[2, 2],
                a[0, 0] * a[2, 2] - a[0, 2] * a[2, 0],
                a[0, 2] * a[1, 0] - a[0, 0] * a[1, 2],
            ],
            [
                a[1, 0] * a[2, 1] - a[1, 1] * a[2, 0],
                a[0, 1] * a[2, 0] - a[0, 0] * a[2, 1],
                a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0],
            ],
        ]
    )
    return adj / det


def _warp_array(data: np.ndarray, matrix: np.ndarray, translation: np.ndarray) -> np.ndarray:
    det = _det_small(matrix)
    if abs(det) <= _DET_FLOOR:
        raise InvalidTransformError("cannot warp with a singular matrix")
    inv = _inv_small(matrix, det)
    pts = (_pixel_coords(data.shape) - translation) @ inv.T
    return _interpolate_zero_outside(data, pts).reshape(data.shape)


def warp(image: ImageGrid, t: Transform) -> ImageGrid:
    """Resample ``image`` through the inverse map of ``t``.

    The output value at pixel y is the multilinear sample of the input at
    ``A^-1 (y - b)``, zero outside the grid.
    """
    if t.dim != image.dim:
        raise InvalidInputError(
            f"transform dimension {t.dim} does not match image dimension {image.dim}"
        )
    return ImageGrid(_warp_array(image.data, t.matrix, t.translation))


def _similarity_arrays(a: np.ndarray, b: np.ndarray, norm: str) -> float:
    diff = a - b
    if norm == "l2":
        return float(np.sum(diff * diff))
    return float(np.sum(np.abs(diff)))


def similarity(a: ImageGrid, b: ImageGrid, norm: str = "l2") -> float:
    """Pixel-sum image discrepancy: squared differences (l2) or absolute (l1)."""
    if norm not in _NORMS:
        raise InvalidInputError(f"norm must be one of {_NORMS}, got {norm!r}")
    if a.shape != b.shape:
        raise InvalidInputError(f"shape mismatch: {a.shape} vs {b.shape}")
    return _similarity_arrays(a.data, b.data, norm)


def regularizer(t: Transform) -> float:
    """Squared Frobenius distance of A from the identity plus ``|b|^2``."""
    eye = np.eye(t.dim)
    return float(np.sum((t.matrix - eye) ** 2) + np.sum(t.translation**2))


def _inverse_penalty(matrix: np.ndarray, translation: np.ndarray) -> float:
    """Regularizer evaluated on the inverse map, which is what warping uses."""
    inv = _inv_small(matrix, _det_small(matrix))
    eye = np.eye(matrix.shape[0])
    return float(np.sum((inv - eye) ** 2) + np.sum((inv @ translation) ** 2))


@dataclass(frozen=True)
class StepSchedule:
    """Adaptive step-size rule for the backtracking descent."""

    initial: float = 0.5
    grow: float = 1.6
    shrink: float = 0.5
    max_step: float = 4.0

    def __post_init__(self):
        if not (self.initial > 0 and 0 < self.shrink < 1 and self.grow >= 1):
            raise InvalidInputError("invalid step schedule")


@dataclass(frozen=True)
class RegistrationConfig:
    transform_kind: str = "affine"
    norm: str = "l2"
    lam: float = 1e-4
    outer_iterations: int = 50
    inner_steps: int = 2
    step_schedule: StepSchedule = field(default_factory=StepSchedule)
    fit_intensity_scale: bool = False
    seed: int = 0
    pyramid_levels: int = 2
    tol: float = 1e-6
    max_workers: int | None = None

    def __post_init__(self):
        if self.transform_kind not in _KINDS:
            raise InvalidInputError(f"unknown transform kind {self.transform_kind!r}")
        if self.norm not in _NORMS:
            raise InvalidInputError(f"norm must be one of {_NORMS}")
        if self.lam < 0:
            raise InvalidInputError("regularization weight must be >= 0")
        if self.outer_iterations < 1 or self.inner_steps < 1:
            raise InvalidInputError("iteration counts must be >= 1")
        if self.pyramid_levels < 1:
            raise InvalidInputError("pyramid_levels must be >= 1")


@dataclass
class RegistrationResult:
    template: ImageGrid
    transforms: list[Transform]
    registered: ImageStack
    intensity_scales: np.ndarray
    energy_trace: list[float]
    coarse_energy_traces: list[list[float]]
    freeze_events: list[tuple[int, int, int]]  # (level, outer iteration, image)


# --- optimizer parametrization -------------------------------------------
#
# z concatenates the non-translation parameters (angles, or the entries of
# A - I) scaled by the grid half-extent, followed by the translation of
# the map about the grid center. All entries of z are then roughly
# "pixels of displacement at the image rim".


def _param_scale(kind: str, dim: int, radius: float) -> np.ndarray:
    n_rot = (1 if dim == 2 else 3) if kind == "rigid" else dim * dim
    return np.concatenate([np.full(n_rot, radius), np.ones(dim)])


def _transform_from_z(kind: str, dim: int, z: np.ndarray, center: np.ndarray,
                      scale: np.ndarray) -> Transform:
    raw = z / scale
    if kind == "rigid":
        n_rot = 1 if dim == 2 else 3
        angles = raw[:n_rot]
        matrix = _rotation_matrix(angles, dim)
        b = center - matrix @ center + raw[n_rot:]
        return Transform(kind="rigid", matrix=matrix, translation=b, angles=angles)
    matrix = np.eye(dim) + raw[: dim * dim].reshape(dim, dim)
    b = center - matrix @ center + raw[dim * dim :]
    return Transform.affine(matrix, b)


def _z_from_transform(t: Transform, center: np.ndarray, scale: np.ndarray) -> np.ndarray:
    t_param = t.translation - center + t.matrix @ center
    if t.kind == "rigid":
        raw = np.concatenate([t.angles, t_param])
    else:
        raw = np.concatenate([(t.matrix - np.eye(t.dim)).ravel(), t_param])
    return raw * scale


def _make_image_energy(image_data, template_scaled, kind, dim, center, scale, lam, norm):
    """Energy of one image's transform with template and scale frozen.

    Works on raw arrays and flat vectors: this closure runs once per
    finite-difference probe and line-search trial, so no Transform objects
    are built here.
    """
    coords = _pixel_coords(image_data.shape)
    template_flat = np.ascontiguousarray(template_scaled).ravel()
    eye = np.eye(dim)
    n_rot = (1 if dim == 2 else 3) if kind == "rigid" else dim * dim
    is_l2 = norm == "l2"

    def energy(z: np.ndarray) -> float:
        raw = z / scale
        if kind == "rigid":
            matrix = _rotation_matrix(raw[:n_rot], dim)
        else:
            matrix = eye + raw[:n_rot].reshape(dim, dim)
        det = _det_small(matrix)
        if abs(det) <= _DET_FLOOR:
            return math.inf
        inv = _inv_small(matrix, det)
        b = center - matrix @ center + raw[n_rot:]
        pts = (coords - b) @ inv.T
        warped = _interpolate_zero_outside(image_data, pts)
        diff = warped - template_flat
        sim = float(diff @ diff) if is_l2 else float(np.abs(diff).sum())
        penalty = float(np.sum((inv - eye) ** 2) + np.sum((inv @ b) ** 2))
        return sim + lam * penalty

    return energy


def _fd_gradient(energy, z: np.ndarray, h: float = _FD_STEP) -> np.ndarray:
    grad = np.empty_like(z)
    for k in range(z.shape[0]):
        zp = z.copy()
        zm = z.copy()
        zp[k] += h
        zm[k] -= h
        grad[k] = (energy(zp) - energy(zm)) / (2.0 * h)
    return grad


def _fd_gradient_richardson(energy, z: np.ndarray, h: float = _FD_STEP) -> np.ndarray:
    """Five-point stencil; used only to cross-check the cheaper gradient."""
    grad = np.empty_like(z)
    for k in range(z.shape[0]):
        zs = [z.copy() for _ in range(4)]
        zs[0][k] -= 2 * h
        zs[1][k] -= h
        zs[2][k] += h
        zs[3][k] += 2 * h
        e = [energy(v) for v in zs]
        grad[k] = (e[0] - 8 * e[1] + 8 * e[2] - e[3]) / (12.0 * h)
    return grad


def _descend_one(energy, z, alpha, schedule, inner_steps):
    """A few backtracked gradient steps; returns (z, alpha, frozen)."""
    e0 = energy(z)
    frozen = False
    for _ in range(inner_steps):
        grad = _fd_gradient(energy, z)
        gnorm2 = float(grad @ grad)
        if not np.isfinite(gnorm2) or gnorm2 < 1e-20:
            break
        step = alpha
        accepted = False
        for _ in range(_MAX_BACKTRACKS):
            z_new = z - step * grad
            e_new = energy(z_new)
            if e_new <= e0 - _ARMIJO * step * gnorm2:
                z, e0 = z_new, e_new
                alpha = min(step * schedule.grow, schedule.max_step)
                accepted = True
                break
            step *= schedule.shrink
        if not accepted:
            frozen = True
            break
    return z, alpha, frozen


def _weighted_median(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted median along axis 0; weights are per-slice positives."""
    order = np.argsort(values, axis=0, kind="stable")
    srt = np.take_along_axis(values, order, axis=0)
    w = weights[order]
    cum = np.cumsum(w, axis=0)
    half = 0.5 * np.sum(weights)
    idx = np.argmax(cum >= half, axis=0)
    return np.take_along_axis(srt, idx[None, ...], axis=0)[0]


def _update_template(registered: np.ndarray, scales: np.ndarray, norm: str) -> np.ndarray:
    shape_ones = (-1,) + (1,) * (registered.ndim - 1)
    if np.all(scales == 1.0):
        if norm == "l2":
            return registered.mean(axis=0)
        return np.median(registered, axis=0)
    s = scales.reshape(shape_ones)
    if norm == "l2":
        return np.sum(s * registered, axis=0) / float(np.sum(scales**2))
    return _weighted_median(registered / s, scales)


_GOLDEN_RATIO = (math.sqrt(5.0) - 1.0) / 2.0


def _fit_scale(registered_i: np.ndarray, template: np.ndarray, norm: str) -> float:
    """Intensity factor making the scaled template match one registered image."""
    if norm == "l2":
        den = float(np.sum(template * template))
        if den <= 0:
            return 1.0
        s = float(np.sum(registered_i * template)) / den
    else:
        def cost(s):
            return float(np.sum(np.abs(registered_i - s * template)))

        lo, hi = 0.0, 2.0
        while cost(hi) < cost(hi - 1e-6) and hi < 64.0:  # expand until convex min inside
            hi *= 2.0
        c = hi - _GOLDEN_RATIO * (hi - lo)
        d = lo + _GOLDEN_RATIO * (hi - lo)
        fc, fd = cost(c), cost(d)
        while hi - lo > 1e-8:
            if fc < fd:
                hi, d, fd = d, c, fc
                c = hi - _GOLDEN_RATIO * (hi - lo)
                fc = cost(c)
            else:
                lo, c, fc = c, d, fd
                d = lo + _GOLDEN_RATIO * (hi - lo)
                fd = cost(d)
        s = 0.5 * (lo + hi)
    return float(min(max(s, 1e-3), 1e3))


def _total_energy(registered, template, scales, transforms, lam, norm):
    shape_ones = (-1,) + (1,) * (registered.ndim - 1)
    scaled = scales.reshape(shape_ones) * template[None, ...]
    diff = registered - scaled
    if norm == "l2":
        sim = float(np.sum(diff * diff))
    else:
        sim = float(np.sum(np.abs(diff)))
    reg = sum(_inverse_penalty(t.matrix, t.translation) for t in transforms)
    return sim + lam * reg


def _downsample_stack(data: np.ndarray) -> np.ndarray:
    spatial = tuple(range(1, data.ndim))
    smoothed = smooth_array(data, 1.0, axes=spatial)
    slicer = (slice(None),) + (slice(None, None, 2),) * (data.ndim - 1)
    return np.ascontiguousarray(smoothed[slicer])


def _register_level(data, init_transforms, cfg, level_index):
    n = data.shape[0]
    dim = data.ndim - 1
    shape = data.shape[1:]
    center = (np.array(shape, dtype=np.float64) - 1.0) / 2.0
    radius = max(shape) / 2.0
    scale = _param_scale(cfg.transform_kind, dim, radius)

    zs = [_z_from_transform(t, center, scale) for t in init_transforms]
    alphas = [cfg.step_schedule.initial] * n
    scales = np.ones(n)

    def build_transform(z):
        return _transform_from_z(cfg.transform_kind, dim, z, center, scale)

    def warp_all(z_list):
        return np.stack(
            [_warp_array(data[i], t.matrix, t.translation)
             for i, t in enumerate(map(build_transform, z_list))],
            axis=0,
        )

    registered = warp_all(zs)
    template = _update_template(registered, scales, cfg.norm)
    transforms = [build_transform(z) for z in zs]
    energy = _total_energy(registered, template, scales, transforms, cfg.lam, cfg.norm)
    trace = [energy]
    freeze_events = []

    for outer in range(cfg.outer_iterations):
        # (a) per-image descent against the frozen (scaled) template
        def task(i):
            tmpl_scaled = scales[i] * template
            e = _make_image_energy(
                data[i], tmpl_scaled, cfg.transform_kind, dim, center, scale,
                cfg.lam, cfg.norm,
            )
            return _descend_one(e, zs[i], alphas[i], cfg.step_schedule, cfg.inner_steps)

        if cfg.max_workers and cfg.max_workers > 1:
            with ThreadPoolExecutor(max_workers=cfg.max_workers) as pool:
                results = list(pool.map(task, range(n)))
        else:
            results = [task(i) for i in range(n)]
        for i, (z_i, a_i, frz) in enumerate(results):
            zs[i], alphas[i] = z_i, a_i
            if frz:
                freeze_events.append((level_index, outer, i))

        registered = warp_all(zs)
        transforms = [build_transform(z) for z in zs]

        # (b) per-image intensity scales (optional)
        if cfg.fit_intensity_scale:
            scales = np.array(
                [_fit_scale(registered[i], template, cfg.norm) for i in range(n)]
            )

        # (c) exact template refit
        template = _update_template(registered, scales, cfg.norm)
        energy = _total_energy(registered, template, scales, transforms, cfg.lam, cfg.norm)

        # (d) gauge fixing, accepted only when it does not raise the energy
        zs, registered, template, transforms, energy = _center_transforms(
            data, zs, registered, template, transforms, scales, energy,
            cfg, dim, center, scale,
        )

        trace.append(energy)
        prev = trace[-2]
        if prev - energy <= cfg.tol * max(abs(prev), 1e-12):
            break

    return zs, scales, template, registered, transforms, trace, freeze_events


def _center_transforms(data, zs, registered, template, transforms, scales, energy,
                       cfg, dim, center, scale):
    """Remove the common drift the functional does not pin down.

    Subtracts the mean translation (and, for affine, normalizes the mean
    log-determinant to zero), then refits the template. The adjustment is
    kept only if the total energy does not increase, which preserves the
    monotone energy trace.
    """
    n_rot = (1 if dim == 2 else 3) if cfg.transform_kind == "rigid" else dim * dim
    z_arr = np.stack(zs, axis=0)
    mean_t = z_arr[:, n_rot:].mean(axis=0)
    log_det_mean = 0.0
    if cfg.transform_kind == "affine":
        log_det_mean = float(
            np.mean([math.log(abs(np.linalg.det(t.matrix))) for t in transforms])
        )
    if np.all(np.abs(mean_t) < 1e-9) and abs(log_det_mean) < 1e-9:
        return zs, registered, template, transforms, energy

    z_new = z_arr.copy()
    z_new[:, n_rot:] -= mean_t
    if cfg.transform_kind == "affine" and abs(log_det_mean) >= 1e-9:
        shrink = math.exp(-log_det_mean / dim)
        for i in range(z_new.shape[0]):
            matrix = transforms[i].matrix * shrink
            raw_m = (matrix - np.eye(dim)).ravel() * scale[:n_rot]
            z_new[i, :n_rot] = raw_m

    zs_new = [z_new[i] for i in range(z_new.shape[0])]
    try:
        transforms_new = [
            _transform_from_z(cfg.transform_kind, dim, z, center, scale) for z in zs_new
        ]
        registered_new = np.stack(
            [_warp_array(data[i], t.matrix, t.translation)
             for i, t in enumerate(transforms_new)],
            axis=0,
        )
    except InvalidTransformError:
        return zs, registered, template, transforms, energy
    template_new = _update_template(registered_new, scales, cfg.norm)
    energy_new = _total_energy(
        registered_new, template_new, scales, transforms_new, cfg.lam, cfg.norm
    )
    if energy_new <= energy * (1 + 1e-12) + 1e-15:
        return zs_new, registered_new, template_new, transforms_new, energy_new
    return zs, registered, template, transforms, energy


def groupwise_register(stack: ImageStack, cfg: RegistrationConfig | None = None
                       ) -> RegistrationResult:
    """Jointly estimate one transform per image and the consensus template.

    Runs coarse-to-fine when the images are large enough, then alternates
    exact template refits with per-image transform descent until the
    energy change falls below ``cfg.tol`` or ``cfg.outer_iterations`` is
    reached. The returned energy trace covers the finest level and is
    non-increasing; traces of coarser levels are reported separately.
    """
    cfg = cfg or RegistrationConfig()
    if len(stack) < 2:
        raise InvalidInputError("groupwise registration needs at least 2 images")

    levels = [stack.data]
    for _ in range(cfg.pyramid_levels - 1):
        if min(levels[0].shape[1:]) < 16:
            break
        levels.insert(0, _downsample_stack(levels[0]))

    dim = stack.dim
    transforms = [Transform.identity(cfg.transform_kind, dim) for _ in range(len(stack))]
    coarse_traces = []
    freeze_events = []
    template = registered = scales = trace = None

    for level_index, data in enumerate(levels):
        if level_index > 0:
            # Coordinates double from one level to the next: same matrix,
            # doubled translation.
            transforms = [
                Transform(
                    kind=t.kind,
                    matrix=t.matrix,
                    translation=2.0 * t.translation,
                    angles=t.angles,
                )
                for t in transforms
            ]
        (_, scales, template, registered, transforms, trace, events) = _register_level(
            data, transforms, cfg, level_index
        )
        freeze_events.extend(events)
        if level_index < len(levels) - 1:
            coarse_traces.append(trace)

    return RegistrationResult(
        template=ImageGrid(template),
        transforms=transforms,
        registered=ImageStack(registered),
        intensity_scales=scales,
        energy_trace=trace,
        coarse_energy_traces=coarse_traces,
        freeze_events=freeze_events,
    )
