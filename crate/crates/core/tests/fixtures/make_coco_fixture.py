"""Regenerates coco_fixture.json with pycocotools as the reference encoder.

Polygon areas, boxes and compressed RLE strings all come from pycocotools,
so the Rust decoder is checked against an independent implementation.
"""
import json
import math
import random

import numpy as np
from pycocotools import mask as mask_utils

random.seed(2017)
np.random.seed(2017)

SIZES = [(640, 480), (480, 640), (640, 427), (500, 375), (640, 360),
         (427, 640), (612, 612), (640, 512), (375, 500), (640, 480)]
CATEGORIES = [(1, "person"), (3, "car"), (18, "dog"), (38, "kite"), (49, "knife"), (77, "cell phone")]


def star_polygon(w, h):
    r = random.uniform(40, min(w, h) / 3)
    cx = random.uniform(r + 2, w - r - 2)
    cy = random.uniform(r + 2, h - r - 2)
    n = random.randint(5, 14)
    pts = []
    for k in range(n):
        a = 2 * math.pi * k / n + random.uniform(-0.2, 0.2)
        rr = r * random.uniform(0.6, 1.0)
        pts += [round(cx + rr * math.cos(a), 2), round(cy + rr * math.sin(a), 2)]
    return pts


def blob(w, h):
    m = np.zeros((h, w), dtype=np.uint8, order="F")
    for _ in range(random.randint(2, 4)):
        x0, y0 = random.randint(0, w - 80), random.randint(0, h - 60)
        m[y0:y0 + random.randint(20, 60), x0:x0 + random.randint(30, 80)] = 1
    return m


def uncompressed_counts(m):
    flat = m.flatten(order="F")
    counts, cur, run = [], 0, 0
    for v in flat:
        if v != cur:
            counts.append(run)
            cur, run = v, 0
        run += 1
    counts.append(run)
    return counts


images, anns = [], []
for i, (w, h) in enumerate(SIZES, start=1):
    images.append({"id": i, "file_name": f"{i:012d}.jpg", "width": w, "height": h})
    for _ in range(random.randint(2, 4)):
        polys = [star_polygon(w, h)]
        if random.random() < 0.3:
            polys.append(star_polygon(w, h))
        rle = mask_utils.merge(mask_utils.frPyObjects(polys, h, w))
        anns.append({
            "id": len(anns) + 1,
            "image_id": i,
            "category_id": random.choice(CATEGORIES)[0],
            "segmentation": polys,
            "area": float(mask_utils.area(rle)),
            "bbox": [float(v) for v in mask_utils.toBbox(rle)],
            "iscrowd": 0,
        })
    m = blob(w, h)
    rle = mask_utils.encode(m)
    if i % 2:
        seg = {"counts": rle["counts"].decode("ascii"), "size": [h, w]}
    else:
        seg = {"counts": uncompressed_counts(m), "size": [h, w]}
    anns.append({
        "id": len(anns) + 1,
        "image_id": i,
        "category_id": 1,
        "segmentation": seg,
        "area": float(mask_utils.area(rle)),
        "bbox": [float(v) for v in mask_utils.toBbox(rle)],
        "iscrowd": 1,
    })

doc = {
    "info": {"description": "COCO-format fixture encoded with pycocotools"},
    "images": images,
    "annotations": anns,
    "categories": [{"id": c, "name": n, "supercategory": "x"} for c, n in CATEGORIES],
}
with open("coco_fixture.json", "w") as f:
    json.dump(doc, f, indent=1)
    f.write("\n")
