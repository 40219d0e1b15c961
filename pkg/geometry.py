import numpy as np

from models import ArrayGeometry, InvalidArgumentError

# Positions are stored in carrier wavelengths, so every phase term reads
# 2π·<x_n, u> and the carrier frequency never shows up.


def wrap_phase(phase):
    """ Wrap angles into [-π, π)."""
    return np.mod(np.asarray(phase, dtype=float) + np.pi, 2 * np.pi) - np.pi


def unit_vector(azimuth: float, elevation: float = 0.0) -> np.ndarray:
    """ Direction from azimuth (in the xy-plane, from +x) and elevation (from the xy-plane)."""
    ce = np.cos(elevation)
    return np.array([ce * np.cos(azimuth), ce * np.sin(azimuth), np.sin(elevation)])


def psi_from_angle(phi, spacing_wl: float = 0.5):
    """ Spatial angle ψ = 2π·d·sin φ for a ULA with spacing d (wavelengths)."""
    return 2 * np.pi * spacing_wl * np.sin(phi)


def angle_from_psi(psi, spacing_wl: float = 0.5):
    """
    Geometric angle φ (radians) for a spatial angle ψ.
    NaN where |ψ| exceeds the visible region 2π·d.
    """
    s = np.asarray(psi, dtype=float) / (2 * np.pi * spacing_wl)
    with np.errstate(invalid="ignore"):
        return np.where(np.abs(s) <= 1, np.arcsin(np.clip(s, -1, 1)), np.nan)


def _anchor(positions: np.ndarray) -> np.ndarray:
    # reference point convention: element 1 at the origin
    return positions - positions[0]


def make_ula(M: int, spacing_wl: float) -> ArrayGeometry:
    """ Uniform linear array along x with element 1 at the origin."""
    if M < 1 or not spacing_wl > 0:
        raise InvalidArgumentError(f"ULA needs M >= 1 and spacing > 0 (got M={M}, d={spacing_wl})")
    positions = np.zeros((M, 3))
    positions[:, 0] = np.arange(M) * spacing_wl
    return ArrayGeometry(positions=positions, kind="ula", spacing_wl=float(spacing_wl))


def make_upa(Mx: int, My: int, spacing_wl: float) -> ArrayGeometry:
    """ Planar Mx-by-My grid in the xy-plane, x index running slowest."""
    if Mx < 1 or My < 1 or not spacing_wl > 0:
        raise InvalidArgumentError(f"UPA needs Mx, My >= 1 and spacing > 0 (got {Mx}x{My}, d={spacing_wl})")
    ix, iy = np.meshgrid(np.arange(Mx), np.arange(My), indexing="ij")
    positions = np.column_stack([
        ix.ravel() * spacing_wl,
        iy.ravel() * spacing_wl,
        np.zeros(Mx * My),
    ])
    return ArrayGeometry(positions=positions, kind="upa", spacing_wl=float(spacing_wl))


def make_cylindrical(n_rings: int, n_per_ring: int, radius_wl: float, ring_spacing_wl: float) -> ArrayGeometry:
    """
    Stacked rings of equally spaced elements around the z axis, translated so
    that element 1 (first ring, angle 0) is at the origin.
    """
    if n_rings < 1 or n_per_ring < 1:
        raise InvalidArgumentError("cylindrical array needs n_rings >= 1 and n_per_ring >= 1")
    if not radius_wl > 0 or ring_spacing_wl < 0:
        raise InvalidArgumentError("cylindrical array needs radius > 0 and ring spacing >= 0")

    angles = 2 * np.pi * np.arange(n_per_ring) / n_per_ring
    rows = []
    for ring in range(n_rings):
        z = ring * ring_spacing_wl
        for ang in angles:
            rows.append((radius_wl * np.cos(ang), radius_wl * np.sin(ang), z))
    positions = _anchor(np.array(rows, dtype=float))
    return ArrayGeometry(positions=positions, kind="cylindrical")


def make_custom(positions) -> ArrayGeometry:
    """ Explicit coordinate list (wavelengths); re-anchored on the first element."""
    pos = np.asarray(positions, dtype=float)
    if pos.ndim != 2 or pos.shape[0] < 1 or pos.shape[1] not in (1, 2, 3):
        raise InvalidArgumentError("custom positions must be a list of 1D/2D/3D coordinates")
    if pos.shape[1] < 3:
        pos = np.hstack([pos, np.zeros((pos.shape[0], 3 - pos.shape[1]))])
    if not np.all(np.isfinite(pos)):
        raise InvalidArgumentError("custom positions must be finite")
    return ArrayGeometry(positions=_anchor(pos), kind="custom")


def steering_vector(geom: ArrayGeometry, direction) -> np.ndarray:
    """
    p(u) with [p(u)]_n = exp(j·2π·<x_n - x_1, u>).

    `direction` is either a 3D unit vector or, for ULAs, the scalar spatial
    angle ψ, in which case [p]_n = exp(j·(n-1)·ψ).
    """
    if np.ndim(direction) == 0:
        if geom.kind != "ula":
            raise InvalidArgumentError("scalar ψ directions are only defined for ULAs")
        psi = float(wrap_phase(direction))
        return np.exp(1j * np.arange(geom.num_elements) * psi)

    u = np.asarray(direction, dtype=float)
    if u.shape != (3,):
        raise InvalidArgumentError("direction must be a 3D unit vector")
    if abs(np.linalg.norm(u) - 1.0) > 1e-12:
        raise InvalidArgumentError(f"direction is not a unit vector (norm={np.linalg.norm(u)!r})")
    proj = _anchor(geom.positions) @ u
    return np.exp(2j * np.pi * proj)


def steering_matrix(geom: ArrayGeometry, psi=None, directions=None) -> np.ndarray:
    """
    Stacked steering vectors, shape (G, M). ULAs accept `psi`; every geometry
    accepts `directions` of shape (G, 3).
    """
    if directions is not None:
        dirs = np.asarray(directions, dtype=float)
        norms = np.linalg.norm(dirs, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise InvalidArgumentError("grid directions must be unit vectors")
        return np.exp(2j * np.pi * dirs @ _anchor(geom.positions).T)
    if geom.kind != "ula":
        raise InvalidArgumentError("ψ grids need a ULA; use a direction grid for other geometries")
    n = np.arange(geom.num_elements)
    return np.exp(1j * np.outer(np.asarray(psi, dtype=float), n))
