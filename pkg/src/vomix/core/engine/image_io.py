"""Binary PPM (P6, 8-bit RGB) reading and writing."""

import logging
import re
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from vomix.core.exceptions import ImageFormatError

logger = logging.getLogger(__name__)

_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n)+(\d+)")


def _parse_header(data: bytes, path: str) -> tuple[int, int, int, int]:
    """Return (width, height, maxval, offset of the pixel data)."""
    if not data.startswith(b"P6"):
        raise ImageFormatError(f"{path}: not a binary PPM (magic {data[:2]!r})")
    pos = 2
    values = []
    for _ in range(3):
        m = _TOKEN.match(data, pos)
        if m is None:
            raise ImageFormatError(f"{path}: malformed PPM header")
        values.append(int(m.group(1)))
        pos = m.end()
    if pos >= len(data) or data[pos : pos + 1] not in (b" ", b"\n", b"\r", b"\t"):
        raise ImageFormatError(f"{path}: malformed PPM header")
    return values[0], values[1], values[2], pos + 1


def read_ppm(path: Path) -> NDArray[np.uint8]:
    """Read a P6 image as an H x W x 3 uint8 array.

    Raises:
        FileNotFoundError: If the file does not exist.
        ImageFormatError: On anything but 8-bit P6 with complete pixel data.
    """
    path = Path(path)
    data = path.read_bytes()
    width, height, maxval, offset = _parse_header(data, str(path))
    if maxval != 255:
        raise ImageFormatError(f"{path}: only 8-bit PPM is supported (maxval {maxval})")
    if width < 1 or height < 1:
        raise ImageFormatError(f"{path}: empty image {width}x{height}")
    expected = width * height * 3
    pixels = data[offset : offset + expected]
    if len(pixels) != expected:
        raise ImageFormatError(f"{path}: expected {expected} pixel bytes, found {len(pixels)}")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(height, width, 3).copy()


def write_ppm(image: NDArray[np.uint8], path: Path) -> None:
    """Write an H x W x 3 uint8 array as P6."""
    if image.ndim != 3 or image.shape[2] != 3:
        raise ImageFormatError(f"expected an H x W x 3 image, got shape {image.shape}")
    path = Path(path)
    height, width = image.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{width} {height}\n255\n".encode("ascii"))
        f.write(np.ascontiguousarray(image, dtype=np.uint8).tobytes())
    logger.info(f"Wrote {width}x{height} image to {path}")


def check_image_size(image: NDArray[np.uint8], size: int, path: str = "image") -> None:
    """Raise ImageFormatError unless the image is size x size."""
    if image.shape[:2] != (size, size):
        raise ImageFormatError(
            f"{path}: image is {image.shape[1]}x{image.shape[0]}, model expects {size}x{size}"
        )
