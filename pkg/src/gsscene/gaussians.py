"""Gaussian cloud representation and PLY persistence.

A cloud is five parallel arrays over N Gaussians:

    p      (N, 3)  center positions, scene units
    s      (N, 3)  per-axis standard deviations, strictly positive
    q      (N, 4)  unit rotation quaternions, scalar-first
    c      (N, 3)  RGB in [0, 1]
    alpha  (N,)    opacity in [0, 1]

Scales are linear standard deviations everywhere inside the engine; the
log domain (and the logit domain for opacity) exists only at the PLY
boundary, matching the de-facto splat file layout.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable

import numpy as np

from .errors import EmptyCloud, InvariantViolation, UnknownLayout, ValueOutOfDomain

if TYPE_CHECKING:
    from .guide import SceneGuide

EXTENT_FLOOR = 1e-6

# Opacity is clamped into this open interval before the logit transform so
# that alpha = 0 and alpha = 1 survive a save/load round trip to 1e-6.
_ALPHA_CLAMP = 1e-7

PLY_ATTRIBUTES = (
    "x", "y", "z",
    "opacity",
    "scale_0", "scale_1", "scale_2",
    "rot_0", "rot_1", "rot_2", "rot_3",
    "f_dc_0", "f_dc_1", "f_dc_2",
)


@dataclass
class GaussianCloud:
    p: np.ndarray
    s: np.ndarray
    q: np.ndarray
    c: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        self.p = np.atleast_2d(np.asarray(self.p, dtype=float))
        self.s = np.atleast_2d(np.asarray(self.s, dtype=float))
        self.q = np.atleast_2d(np.asarray(self.q, dtype=float))
        self.c = np.atleast_2d(np.asarray(self.c, dtype=float))
        self.alpha = np.asarray(self.alpha, dtype=float).reshape(-1)
        self.validate()

    def validate(self):
        n = len(self.alpha)
        shapes = {"p": (n, 3), "s": (n, 3), "q": (n, 4), "c": (n, 3)}
        for name, want in shapes.items():
            arr = getattr(self, name)
            if n == 0:
                if arr.size != 0:
                    raise InvariantViolation(f"{name} not empty for N=0 cloud")
                continue
            if arr.shape != want:
                raise InvariantViolation(f"{name} has shape {arr.shape}, expected {want}")
        if n == 0:
            return
        for name in ("p", "s", "q", "c"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise InvariantViolation(f"{name} contains non-finite values")
        if not np.all(np.isfinite(self.alpha)):
            raise InvariantViolation("alpha contains non-finite values")
        if np.any(self.s <= 0):
            raise InvariantViolation("s must be strictly positive")
        norms = np.linalg.norm(self.q, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise InvariantViolation("q rows must be unit-norm within 1e-6")
        if np.any((self.alpha < 0) | (self.alpha > 1)):
            raise InvariantViolation("alpha must lie in [0, 1]")
        if np.any((self.c < 0) | (self.c > 1)):
            raise InvariantViolation("c must lie in [0, 1]")

    def __len__(self) -> int:
        return len(self.alpha)

    def copy(self) -> "GaussianCloud":
        return GaussianCloud(
            p=self.p.copy(), s=self.s.copy(), q=self.q.copy(),
            c=self.c.copy(), alpha=self.alpha.copy(),
        )

    @classmethod
    def empty(cls) -> "GaussianCloud":
        return cls(
            p=np.zeros((0, 3)), s=np.zeros((0, 3)), q=np.zeros((0, 4)),
            c=np.zeros((0, 3)), alpha=np.zeros(0),
        )

    @classmethod
    def concat(cls, clouds: Iterable["GaussianCloud"]) -> "GaussianCloud":
        clouds = [c for c in clouds if len(c) > 0]
        if not clouds:
            return cls.empty()
        return cls(
            p=np.concatenate([c.p for c in clouds]),
            s=np.concatenate([c.s for c in clouds]),
            q=np.concatenate([c.q for c in clouds]),
            c=np.concatenate([c.c for c in clouds]),
            alpha=np.concatenate([c.alpha for c in clouds]),
        )


@dataclass
class GaussianScene:
    """A guide plus one local-frame cloud per guide object."""

    guide: "SceneGuide"
    clouds: dict = field(default_factory=dict)

    def __post_init__(self):
        guide_ids = {o.id for o in self.guide.objects}
        cloud_ids = set(self.clouds)
        if guide_ids != cloud_ids:
            missing = sorted(guide_ids - cloud_ids)
            extra = sorted(cloud_ids - guide_ids)
            raise InvariantViolation(
                f"scene clouds do not match guide ids (missing={missing}, extra={extra})"
            )


def covariance(s_row: np.ndarray, q_row: np.ndarray) -> np.ndarray:
    """Covariance Sigma = R diag(s^2) R^T. Vectorized over leading dims."""
    from .transforms import quat_to_matrix

    s_row = np.asarray(s_row, dtype=float)
    rot = quat_to_matrix(q_row)
    return (rot * (s_row**2)[..., None, :]) @ np.swapaxes(rot, -1, -2)


def extent(cloud: GaussianCloud) -> tuple[np.ndarray, np.ndarray]:
    """Centroid and per-axis size of a cloud.

    Size is the bounding range of centers inflated by 3x the largest
    standard deviation on each side (covering >= 99% of every Gaussian's
    mass), floored at ``EXTENT_FLOOR`` per axis.
    """
    if len(cloud) == 0:
        raise EmptyCloud("extent of empty cloud is undefined")
    centroid = cloud.p.mean(axis=0)
    e = (cloud.p.max(axis=0) - cloud.p.min(axis=0)) + 6.0 * float(cloud.s.max())
    return centroid, np.maximum(e, EXTENT_FLOOR)


_PLY_TYPE_SIZES = {
    "char": 1, "int8": 1, "uchar": 1, "uint8": 1,
    "short": 2, "int16": 2, "ushort": 2, "uint16": 2,
    "int": 4, "int32": 4, "uint": 4, "uint32": 4,
    "float": 4, "float32": 4, "double": 8, "float64": 8,
}
_PLY_FLOAT_DTYPES = {"float": "<f4", "float32": "<f4", "double": "<f8", "float64": "<f8"}


def save_ply(cloud: GaussianCloud, path) -> None:
    """Write a cloud as binary little-endian PLY (float32 payload)."""
    with open(path, "wb") as fh:
        fh.write(dumps_ply(cloud))


def load_ply(path) -> GaussianCloud:
    """Read a splat-layout PLY back into a cloud.

    Attributes are located by name, so files with extra properties (e.g.
    normals) load fine; missing required attributes raise UnknownLayout.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    return loads_ply(data)


def loads_ply(data: bytes) -> GaussianCloud:
    end = data.find(b"end_header\n")
    if not data.startswith(b"ply") or end < 0:
        raise UnknownLayout("not a PLY file")
    header = data[:end].decode("ascii", errors="replace").splitlines()
    body = data[end + len(b"end_header\n"):]

    n = None
    in_vertex = False
    props: list[tuple[str, str]] = []
    fmt_ok = False
    for line in header:
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "format":
            fmt_ok = parts[1] == "binary_little_endian"
        elif parts[0] == "element":
            in_vertex = parts[1] == "vertex"
            if in_vertex:
                n = int(parts[2])
        elif parts[0] == "property" and in_vertex:
            if parts[1] == "list":
                raise UnknownLayout("list properties are not supported")
            props.append((parts[1], parts[2]))
    if not fmt_ok:
        raise UnknownLayout("only binary_little_endian PLY is supported")
    if n is None:
        raise UnknownLayout("no vertex element")

    names = [name for _, name in props]
    missing = [a for a in PLY_ATTRIBUTES if a not in names]
    if missing:
        raise UnknownLayout(f"missing attributes: {', '.join(missing)}")

    offsets = {}
    stride = 0
    for typ, name in props:
        if typ not in _PLY_TYPE_SIZES:
            raise UnknownLayout(f"unsupported property type {typ}")
        offsets[name] = (stride, typ)
        stride += _PLY_TYPE_SIZES[typ]
    if len(body) < n * stride:
        raise UnknownLayout("truncated payload")

    raw = np.frombuffer(body[: n * stride], dtype=np.uint8).reshape(n, stride)

    def column(name: str) -> np.ndarray:
        off, typ = offsets[name]
        if typ not in _PLY_FLOAT_DTYPES:
            raise UnknownLayout(f"attribute {name} is not a float type")
        width = _PLY_TYPE_SIZES[typ]
        return raw[:, off:off + width].copy().view(_PLY_FLOAT_DTYPES[typ]).reshape(n).astype(float)

    cols = {name: column(name) for name in PLY_ATTRIBUTES}
    for name, col in cols.items():
        if not np.all(np.isfinite(col)):
            raise ValueOutOfDomain(f"attribute {name} contains non-finite values")

    if n == 0:
        return GaussianCloud.empty()

    p = np.stack([cols["x"], cols["y"], cols["z"]], axis=1)
    s = np.exp(np.stack([cols[f"scale_{i}"] for i in range(3)], axis=1))
    q = np.stack([cols[f"rot_{i}"] for i in range(4)], axis=1)
    norms = np.linalg.norm(q, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueOutOfDomain("zero-norm rotation quaternion")
    # normalize only rows that need it, so save . load is bit-stable on
    # files this module wrote (their rows are already unit in float32)
    needs = np.abs(norms - 1.0) > 1e-6
    q = np.where(needs, q / norms, q)
    c = np.clip(np.stack([cols[f"f_dc_{i}"] for i in range(3)], axis=1), 0.0, 1.0)
    alpha = 1.0 / (1.0 + np.exp(-cols["opacity"]))
    return GaussianCloud(p=p, s=s, q=q, c=c, alpha=alpha)


def dumps_ply(cloud: GaussianCloud) -> bytes:
    buf = io.BytesIO()
    n = len(cloud)
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    header += [f"property float {name}" for name in PLY_ATTRIBUTES]
    header.append("end_header")
    alpha = np.clip(cloud.alpha, _ALPHA_CLAMP, 1.0 - _ALPHA_CLAMP)
    logit = np.log(alpha / (1.0 - alpha))
    payload = np.empty((n, len(PLY_ATTRIBUTES)), dtype="<f4")
    if n:
        payload[:, 0:3] = cloud.p
        payload[:, 3] = logit
        payload[:, 4:7] = np.log(cloud.s)
        payload[:, 7:11] = cloud.q
        payload[:, 11:14] = cloud.c
    buf.write(("\n".join(header) + "\n").encode("ascii"))
    buf.write(payload.tobytes())
    return buf.getvalue()
