"""Image and float-grid file handling.

Images are PNG or binary PPM (P6), mapped to [0,1] fields with N=3 (N=1 for
grayscale) and h = 1.  Float-grid files are a one-line ASCII header followed
by row-major little-endian float64 data; they round-trip fields exactly.
All writes go through a temp-file rename so outputs are atomic.
"""

import os
import tempfile

import numpy as np
from PIL import Image

from .exponent import ExponentField
from .grid import Grid2D, VectorField

FGRID_MAGIC = "fgrid"
PGRID_MAGIC = "pgrid"


def atomic_write_bytes(path, data: bytes) -> None:
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode())


def load_image(path) -> VectorField:
    """Load PNG/PPM (8-bit, mapped to [0,1]) or a float-grid file as a field."""
    path = os.fspath(path)
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such image file: {path}")
    with open(path, "rb") as f:
        head = f.read(8)
    if head.startswith(FGRID_MAGIC.encode()):
        return load_field(path)
    try:
        img = Image.open(path)
        img.load()
    except Exception as exc:
        raise ValueError(f"cannot read image {path}: {exc}") from exc
    if img.mode in ("L", "I;16", "I"):
        img = img.convert("L")
        arr = np.asarray(img, dtype=np.float64)[:, :, None]
    else:
        img = img.convert("RGB")
        arr = np.asarray(img, dtype=np.float64)
    # PIL arrays are (rows=y, cols=x); store as (nx, ny, N)
    arr = np.transpose(arr, (1, 0, 2)) / 255.0
    grid = Grid2D(arr.shape[0], arr.shape[1], 1.0)
    return VectorField(grid, arr)


def save_image(path, u: VectorField) -> None:
    """Write an 8-bit PNG or PPM (by extension); values are clipped to [0,1]."""
    path = os.fspath(path)
    arr = np.clip(u.values, 0.0, 1.0)
    q = np.rint(arr * 255.0).astype(np.uint8)
    q = np.transpose(q, (1, 0, 2))
    if q.shape[2] == 1:
        img = Image.fromarray(q[:, :, 0], mode="L")
    elif q.shape[2] == 3:
        img = Image.fromarray(q, mode="RGB")
    else:
        raise ValueError(f"cannot save a {q.shape[2]}-channel field as an image")
    ext = os.path.splitext(path)[1].lower()
    if ext not in (".png", ".ppm"):
        raise ValueError(f"unsupported image extension: {ext}")
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=ext)
    os.close(fd)
    try:
        img.save(tmp, format="PNG" if ext == ".png" else "PPM")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_field(path, u: VectorField) -> None:
    """Float-grid file: 'fgrid nx ny N h' header + row-major float64."""
    header = f"{FGRID_MAGIC} {u.grid.nx} {u.grid.ny} {u.channels} {u.grid.h:.17g}\n"
    data = np.ascontiguousarray(u.values, dtype="<f8").tobytes()
    atomic_write_bytes(path, header.encode() + data)


def load_field(path) -> VectorField:
    with open(path, "rb") as f:
        header = f.readline().decode()
        parts = header.split()
        if len(parts) != 5 or parts[0] != FGRID_MAGIC:
            raise ValueError(f"bad float-grid header in {path}: {header!r}")
        nx, ny, n = int(parts[1]), int(parts[2]), int(parts[3])
        h = float(parts[4])
        data = np.frombuffer(f.read(), dtype="<f8")
    if data.size != nx * ny * n:
        raise ValueError(f"float-grid payload size mismatch in {path}")
    return VectorField(Grid2D(nx, ny, h), data.reshape(nx, ny, n).copy())


def save_exponent(path, p: ExponentField) -> None:
    """Exponent file: 'pgrid nx ny p_plus gap' header + row-major float64."""
    header = f"{PGRID_MAGIC} {p.grid.nx} {p.grid.ny} {p.p_plus:.17g} {p.gap:.17g}\n"
    data = np.ascontiguousarray(p.values, dtype="<f8").tobytes()
    atomic_write_bytes(path, header.encode() + data)


def load_exponent(path, h: float = 1.0) -> ExponentField:
    with open(path, "rb") as f:
        header = f.readline().decode()
        parts = header.split()
        if len(parts) != 5 or parts[0] != PGRID_MAGIC:
            raise ValueError(f"bad exponent-grid header in {path}: {header!r}")
        nx, ny = int(parts[1]), int(parts[2])
        p_plus, gap = float(parts[3]), float(parts[4])
        data = np.frombuffer(f.read(), dtype="<f8")
    if data.size != nx * ny:
        raise ValueError(f"exponent-grid payload size mismatch in {path}")
    return ExponentField(Grid2D(nx, ny, h), data.reshape(nx, ny).copy(), p_plus, gap)


def render_exponent(p: ExponentField) -> np.ndarray:
    """Grayscale rendering of an exponent field: [1, p_plus] -> [0, 255] uint8."""
    span = max(p.p_plus - 1.0, 1e-12)
    scaled = (p.values - 1.0) / span
    return np.rint(np.clip(scaled, 0.0, 1.0) * 255.0).astype(np.uint8)


def add_gaussian_noise(u: VectorField, sigma: float, seed: int) -> VectorField:
    """Seeded additive Gaussian noise in intensity units, clipped to [0,1]."""
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    if sigma == 0:
        return u
    rng = np.random.default_rng(seed)
    noisy = u.values + sigma * rng.standard_normal(u.values.shape)
    return VectorField(u.grid, np.clip(noisy, 0.0, 1.0))


def psnr(u: VectorField, ref: VectorField, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio on the [0, peak] range."""
    err = u.values - ref.values
    mse = float(np.mean(err * err))
    if mse == 0:
        return float("inf")
    return 10.0 * np.log10(peak * peak / mse)
