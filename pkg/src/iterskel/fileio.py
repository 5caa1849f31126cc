"""Binary file formats: SKT1 tensors, PGM images and SKW1 network weights.

SKT1 layout::

    b"SKT1"  u8 dtype (0 = u8 binary, 1 = f32 LE)  u8 ndim
    ndim x u32 LE extents  row-major payload

SKW1 layout::

    b"SKW1"  u8 ndim  u8 layer_count
    per layer: u16 in_ch  u16 out_ch  weights f32 LE [out][in][kz][ky][kx]  biases f32 LE
"""

import hashlib
import struct
from pathlib import Path

import numpy as np

from iterskel.errors import FormatError
from iterskel.grid import is_binary

SKT_MAGIC = b"SKT1"
SKW_MAGIC = b"SKW1"


def encode_skt(g):
    g = np.asarray(g)
    if g.ndim not in (2, 3):
        raise FormatError(f"SKT1 holds 2D or 3D grids, got ndim={g.ndim}")
    if is_binary(g):
        code, payload = 0, np.ascontiguousarray(g, dtype=np.uint8).tobytes()
    else:
        code, payload = 1, np.ascontiguousarray(g, dtype="<f4").tobytes()
    head = SKT_MAGIC + struct.pack("<BB", code, g.ndim) + struct.pack(f"<{g.ndim}I", *g.shape)
    return head + payload


def decode_skt(buf):
    if len(buf) < 6 or buf[:4] != SKT_MAGIC:
        raise FormatError("not an SKT1 file (bad magic)")
    code, ndim = struct.unpack_from("<BB", buf, 4)
    if code not in (0, 1) or ndim not in (2, 3):
        raise FormatError(f"bad SKT1 header: dtype={code} ndim={ndim}")
    off = 6 + 4 * ndim
    if len(buf) < off:
        raise FormatError("truncated SKT1 header")
    shape = struct.unpack_from(f"<{ndim}I", buf, 6)
    dt = np.uint8 if code == 0 else np.dtype("<f4")
    n = int(np.prod(shape))
    if len(buf) != off + n * np.dtype(dt).itemsize:
        raise FormatError("SKT1 payload size does not match extents")
    data = np.frombuffer(buf, dtype=dt, count=n, offset=off)
    return data.reshape(shape).astype(np.float32)


def write_bytes(path, data, exclusive=False):
    """Write ``data`` and return its sha256; ``exclusive`` refuses to replace a file."""
    try:
        with open(path, "xb" if exclusive else "wb") as fh:
            fh.write(data)
    except FileExistsError as exc:
        raise FormatError(f"refusing to overwrite existing {path}") from exc
    return hashlib.sha256(data).hexdigest()


def save_skt(path, g, exclusive=False):
    return write_bytes(path, encode_skt(g), exclusive)


def load_skt(path):
    return decode_skt(Path(path).read_bytes())


def save_pgm(path, g, exclusive=False):
    g = np.asarray(g)
    if g.ndim != 2:
        raise FormatError("PGM holds 2D grids only")
    pix = np.clip(np.rint(g * 255.0), 0, 255).astype(np.uint8)
    h, w = pix.shape
    return write_bytes(path, f"P5\n{w} {h}\n255\n".encode() + pix.tobytes(), exclusive)


def load_pgm(path):
    """Read a binary P5 PGM; values above 127 become foreground."""
    buf = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(buf) and buf[pos : pos + 1].isspace():
            pos += 1
        if buf[pos : pos + 1] == b"#":
            while pos < len(buf) and buf[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header")
        tokens.append(buf[start:pos])
    if tokens[0] != b"P5":
        raise FormatError("not a binary PGM (P5)")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise FormatError("bad PGM header") from exc
    if maxval != 255:
        raise FormatError("only maxval 255 is supported")
    pos += 1
    pix = np.frombuffer(buf, dtype=np.uint8, count=w * h, offset=pos) if len(buf) >= pos + w * h else None
    if pix is None:
        raise FormatError("truncated PGM payload")
    return (pix.reshape(h, w) > 127).astype(np.float32)


def load_grid(path):
    """Load an ``.skt`` or ``.pgm`` file by extension."""
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        return load_pgm(path)
    return load_skt(path)


def encode_skw(params):
    out = [SKW_MAGIC, struct.pack("<BB", params.ndim, len(params.weights))]
    for w, b in zip(params.weights, params.biases):
        out.append(struct.pack("<HH", w.shape[1], w.shape[0]))
        out.append(np.ascontiguousarray(w, dtype="<f4").tobytes())
        out.append(np.ascontiguousarray(b, dtype="<f4").tobytes())
    return b"".join(out)


def decode_skw(buf):
    from iterskel.net import NetParams

    if len(buf) < 6 or buf[:4] != SKW_MAGIC:
        raise FormatError("not an SKW1 file (bad magic)")
    ndim, count = struct.unpack_from("<BB", buf, 4)
    if ndim not in (2, 3) or count < 1:
        raise FormatError(f"bad SKW1 header: ndim={ndim} layers={count}")
    pos = 6
    weights, biases = [], []
    try:
        for _ in range(count):
            cin, cout = struct.unpack_from("<HH", buf, pos)
            pos += 4
            shape = (cout, cin) + (3,) * ndim
            n = int(np.prod(shape))
            w = np.frombuffer(buf, dtype="<f4", count=n, offset=pos).reshape(shape)
            pos += 4 * n
            b = np.frombuffer(buf, dtype="<f4", count=cout, offset=pos)
            pos += 4 * cout
            weights.append(w.astype(np.float32))
            biases.append(b.astype(np.float32))
    except (struct.error, ValueError) as exc:
        raise FormatError("truncated SKW1 file") from exc
    if pos != len(buf):
        raise FormatError("trailing bytes in SKW1 file")
    return NetParams(ndim=ndim, weights=weights, biases=biases)


def save_skw(path, params, exclusive=False):
    return write_bytes(path, encode_skw(params), exclusive)


def load_skw(path):
    return decode_skw(Path(path).read_bytes())
