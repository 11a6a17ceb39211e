"""Reads a fixture .flo with numpy and OpenCV and compares it to the analytic field."""

import sys

import numpy as np


def analytic(w, h):
    y, x = np.mgrid[0:h, 0:w].astype(np.float64)
    return np.stack([0.125 * x - 0.375 * y, 1.0 / (1.0 + x + 2.0 * y)], axis=-1).astype(np.float32)


def read_raw(path):
    data = open(path, "rb").read()
    tag = np.frombuffer(data, "<f4", 1, 0)[0]
    w, h = np.frombuffer(data, "<i4", 2, 4)
    if tag != np.float32(202021.25):
        raise SystemExit(f"bad tag {tag}")
    if len(data) != 12 + 8 * w * h:
        raise SystemExit(f"size {len(data)} does not match {w}x{h}")
    return np.frombuffer(data, "<f4", 2 * w * h, 12).reshape(h, w, 2)


def main():
    path, w, h = sys.argv[1], int(sys.argv[2]), int(sys.argv[3])
    expected = analytic(w, h)
    raw = read_raw(path)
    if raw.shape != expected.shape or not np.array_equal(raw, expected):
        raise SystemExit("numpy reading differs from the analytic field")
    try:
        import cv2
    except ImportError:
        print("opencv not importable, numpy check only")
    else:
        flow = cv2.readOpticalFlow(path)
        if flow is None or not np.array_equal(flow, expected):
            raise SystemExit("cv2.readOpticalFlow differs from the analytic field")
    print(f"{path}: {w}x{h} matches")


if __name__ == "__main__":
    main()
