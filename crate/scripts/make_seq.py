"""Generate a small test sequence for driving the dmp binary end to end.

Writes PNGs with the stdlib only (zlib + struct) so the drive is fully
independent of the engine's own I/O code: a red 16x16 square on a blue
64x64 background, moving 4 px/frame to the right, with indexed-palette
ground-truth masks and a keypoint-mode variant of the same sequence.
"""

import os
import struct
import sys
import zlib

SIDE = 64
SQUARE = 16
TOP = 24
OBJECT = (205, 60, 50)
BACKGROUND = (40, 110, 205)


def chunk(tag: bytes, data: bytes) -> bytes:
    return (
        struct.pack(">I", len(data))
        + tag
        + data
        + struct.pack(">I", zlib.crc32(tag + data) & 0xFFFFFFFF)
    )


def png(width: int, height: int, color_type: int, extra: bytes, raster: bytes) -> bytes:
    header = struct.pack(">IIBBBBB", width, height, 8, color_type, 0, 0, 0)
    return (
        b"\x89PNG\r\n\x1a\n"
        + chunk(b"IHDR", header)
        + extra
        + chunk(b"IDAT", zlib.compress(raster))
        + chunk(b"IEND", b"")
    )


def frame_png(left: int) -> bytes:
    rows = []
    for y in range(SIDE):
        row = bytearray(b"\x00")
        for x in range(SIDE):
            inside = TOP <= y < TOP + SQUARE and left <= x < left + SQUARE
            row += bytes(OBJECT if inside else BACKGROUND)
        rows.append(bytes(row))
    return png(SIDE, SIDE, 2, b"", b"".join(rows))


def mask_png(left: int) -> bytes:
    palette = bytearray(768)
    palette[3:6] = bytes((128, 0, 0))
    rows = []
    for y in range(SIDE):
        row = bytearray(b"\x00")
        for x in range(SIDE):
            inside = TOP <= y < TOP + SQUARE and left <= x < left + SQUARE
            row.append(1 if inside else 0)
        rows.append(bytes(row))
    return png(SIDE, SIDE, 3, chunk(b"PLTE", bytes(palette)), b"".join(rows))


def main() -> None:
    root = sys.argv[1]
    frames = int(sys.argv[2]) if len(sys.argv) > 2 else 6
    mask_dir = os.path.join(root, "mask_seq")
    kp_dir = os.path.join(root, "kp_seq")
    for d in ("frames", "masks"):
        os.makedirs(os.path.join(mask_dir, d), exist_ok=True)
    os.makedirs(os.path.join(kp_dir, "frames"), exist_ok=True)

    for t in range(frames):
        left = 8 + 4 * t
        name = f"frame_{t:03}.png"
        data = frame_png(left)
        for d in (mask_dir, kp_dir):
            with open(os.path.join(d, "frames", name), "wb") as f:
                f.write(data)
        with open(os.path.join(mask_dir, "masks", name), "wb") as f:
            f.write(mask_png(left))

    with open(os.path.join(kp_dir, "keypoints.txt"), "w") as f:
        f.write("# seed: square center\n0 16.0 32.0\n")
    print(f"wrote {frames} frames under {mask_dir} and {kp_dir}")


if __name__ == "__main__":
    main()
