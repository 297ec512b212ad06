#!/usr/bin/env python3
"""Writes the PGM/YAML map pairs used by scenarios/.

Pixel 0 is occupied and 254 is free (map-server trinary convention). Row 0 of
the image is the top edge of the map.
"""

import pathlib
import sys

RESOLUTION = 0.1
OUT = pathlib.Path(__file__).resolve().parent.parent / "scenarios" / "maps"


def blank(width_m, height_m, value):
    w = round(width_m / RESOLUTION)
    h = round(height_m / RESOLUTION)
    return [[value] * w for _ in range(h)]


def paint(img, x0, y0, x1, y1, value):
    h = len(img)
    for row in range(h):
        cy = (h - 1 - row + 0.5) * RESOLUTION
        if not (y0 <= cy <= y1):
            continue
        for col in range(len(img[0])):
            cx = (col + 0.5) * RESOLUTION
            if x0 <= cx <= x1:
                img[row][col] = value


def write(name, img):
    OUT.mkdir(parents=True, exist_ok=True)
    h = len(img)
    w = len(img[0])
    with open(OUT / f"{name}.pgm", "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode())
        f.write(bytes(v for row in img for v in row))
    (OUT / f"{name}.yaml").write_text(
        f"image: {name}.pgm\n"
        f"resolution: {RESOLUTION}\n"
        "origin: [0.0, 0.0, 0.0]\n"
        "negate: 0\n"
        "occupied_thresh: 0.65\n"
        "free_thresh: 0.196\n"
    )


FREE = 254
OCCUPIED = 0


def corridor(length, width):
    img = blank(length + 2.0, width + 2.0, OCCUPIED)
    paint(img, 1.0, 1.0, 1.0 + length, 1.0 + width, FREE)
    return img


def main():
    write("open_20x20", blank(20.0, 20.0, FREE))
    write("corridor_40m", corridor(40.0, 6.0))
    write("corridor_150m", corridor(150.0, 6.0))

    # Two closed rooms: the start room cannot reach the goal room.
    sealed = blank(20.0, 10.0, OCCUPIED)
    paint(sealed, 1.0, 3.0, 7.0, 7.0, FREE)
    paint(sealed, 13.0, 3.0, 19.0, 7.0, FREE)
    write("sealed_rooms", sealed)
    return 0


if __name__ == "__main__":
    sys.exit(main())
