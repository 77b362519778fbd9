"""Readers and writers for camera files, P6 pixmaps and ASCII PLY clouds."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .geometry import CameraView, intrinsics_matrix


def format_float(x: float) -> str:
    # repr round-trips float64 exactly, which keeps outputs bit-reproducible.
    return repr(float(x))


def write_cameras(path, cameras) -> None:
    """One camera per line: ``id fx fy cx cy r11..r33 t1 t2 t3``."""
    lines = []
    for cam in cameras:
        K = cam.intrinsics
        vals = [K[0, 0], K[1, 1], K[0, 2], K[1, 2], *cam.rotation.ravel(), *cam.translation]
        lines.append(" ".join([str(cam.id)] + [format_float(v) for v in vals]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_cameras(path) -> list[CameraView]:
    cameras = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 17:
            raise ValueError(f"{path}:{lineno}: expected 17 fields, got {len(parts)}")
        vals = [float(p) for p in parts[1:]]
        fx, fy, cx, cy = vals[:4]
        cameras.append(CameraView(int(parts[0]), intrinsics_matrix(fx, fy, cx, cy),
                                  np.array(vals[4:13]).reshape(3, 3), np.array(vals[13:16])))
    return cameras


def write_ppm(path, image: np.ndarray) -> None:
    """Write an HxWx3 float image in [0, 1] as binary P6 with maxval 255."""
    img = np.clip(np.rint(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)
    h, w = img.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def _ppm_tokens(data: bytes, count: int) -> tuple[list[int], int]:
    tokens, pos = [], 0
    while len(tokens) < count:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while data[pos:pos + 1] not in (b"\n", b""):
                pos += 1
            continue
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    return tokens, pos + 1


def read_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens, pos = _ppm_tokens(data, 4)
    if tokens[0] != b"P6":
        raise ValueError(f"{path}: not a P6 pixmap")
    w, h, maxval = (int(t) for t in tokens[1:])
    dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
    raw = np.frombuffer(data, dtype=dtype, count=w * h * 3, offset=pos)
    return raw.reshape(h, w, 3).astype(float) / maxval


def write_ply(path, points: np.ndarray) -> None:
    """ASCII PLY with float64 x, y, z."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    header = ["ply", "format ascii 1.0", f"element vertex {len(pts)}",
              "property double x", "property double y", "property double z", "end_header"]
    body = [" ".join(format_float(v) for v in p) for p in pts]
    Path(path).write_text("\n".join(header + body) + "\n")


def read_ply(path) -> np.ndarray:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ValueError(f"{path}: not a PLY file")
    n_vertex, props, i = 0, [], 1
    in_vertex = False
    while lines[i].strip() != "end_header":
        parts = lines[i].split()
        if parts[0] == "format" and parts[1] != "ascii":
            raise ValueError(f"{path}: only ASCII PLY is supported")
        if parts[0] == "element":
            in_vertex = parts[1] == "vertex"
            if in_vertex:
                n_vertex = int(parts[2])
        elif parts[0] == "property" and in_vertex:
            props.append(parts[-1])
        i += 1
    cols = [props.index(c) for c in "xyz"]
    rows = lines[i + 1:i + 1 + n_vertex]
    if not rows:
        return np.zeros((0, 3))
    return np.array([[float(r.split()[c]) for c in cols] for r in rows])
