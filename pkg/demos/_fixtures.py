"""Small helpers the demos share: noise JPEGs and a scratch directory."""

import io
import random
import tempfile
from pathlib import Path

from PIL import Image


def noise_jpeg(seed: int, size=(64, 48), quality=85) -> bytes:
    rng = random.Random(seed)
    img = Image.frombytes("RGB", size, rng.randbytes(size[0] * size[1] * 3))
    buf = io.BytesIO()
    img.save(buf, "JPEG", quality=quality)
    return buf.getvalue()


def scratch() -> Path:
    return Path(tempfile.mkdtemp(prefix="viewerthumbs-demo-"))
