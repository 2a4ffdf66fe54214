#!/usr/bin/env python3
# Copyright 2026 The rlface Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Regenerates the face fixtures and freezes the reference MTCNN detections.

The portrait is scikit-image's `astronaut` sample (NASA, public domain). Reference
detections come from facenet-pytorch's MTCNN with its default thresholds.
Requires: scikit-image, opencv-python-headless, facenet-pytorch, torch.
"""
import json
import os

import cv2
import numpy as np
import skimage.data
from facenet_pytorch import MTCNN

HERE = os.path.dirname(os.path.abspath(__file__))


def save(path, rgb):
    cv2.imwrite(path, cv2.cvtColor(rgb, cv2.COLOR_RGB2BGR), [cv2.IMWRITE_JPEG_QUALITY, 92])


def variants(base):
    """Pipeline images: the portrait under different scales, rotations and exposures."""
    out = []
    h, w = base.shape[:2]
    params = [(0.70, 0, 1.00), (0.62, 6, 0.90), (0.75, -8, 1.10), (0.66, 3, 0.80),
              (0.72, -4, 1.15), (0.60, 10, 1.00), (0.68, -10, 0.95), (0.74, 5, 1.05),
              (0.64, -2, 0.85), (0.70, 8, 1.20), (0.63, -6, 1.00), (0.71, 2, 0.90)]
    for scale, angle, gain in params:
        m = cv2.getRotationMatrix2D((224.0, 120.0), angle, scale)
        img = cv2.warpAffine(base, m, (w, h), flags=cv2.INTER_LINEAR, borderMode=cv2.BORDER_REFLECT)
        img = np.clip(img.astype(np.float32) * gain, 0, 255).astype(np.uint8)
        out.append(img[:360, 40:400])
    return out


def main():
    rgb = skimage.data.astronaut()
    faces = os.path.join(HERE, "faces")
    save(os.path.join(faces, "portrait.jpg"), rgb)

    face = rgb[30:230, 125:325]
    two = np.full((260, 520, 3), 90, np.uint8)
    two[30:230, 30:230] = face
    two[30:230, 290:490] = face[:, ::-1]
    save(os.path.join(faces, "two_people.jpg"), two)

    gray = np.full((200, 200, 3), 128, np.uint8)
    cv2.imwrite(os.path.join(faces, "blank_gray.png"), gray)

    pipeline_images = os.path.join(HERE, "pipeline", "images")
    names = []
    for i, img in enumerate(variants(rgb)):
        name = "person_%02d.jpg" % i
        save(os.path.join(pipeline_images, name), img)
        names.append(name)

    mtcnn = MTCNN(keep_all=True)
    reference = {}
    files = [("faces", n) for n in ("portrait.jpg", "two_people.jpg", "blank_gray.png")]
    files += [("pipeline/images", n) for n in names]
    for sub, name in files:
        img = cv2.cvtColor(cv2.imread(os.path.join(HERE, sub, name)), cv2.COLOR_BGR2RGB)
        boxes, probs, points = mtcnn.detect(img, landmarks=True)
        dets = []
        if boxes is not None:
            for b, p, lm in zip(boxes, probs, points):
                dets.append({"box": [float(v) for v in b], "confidence": float(p),
                             "landmarks": [[float(x), float(y)] for x, y in lm]})
        reference[sub + "/" + name] = dets
    with open(os.path.join(faces, "reference_detections.json"), "w") as f:
        json.dump(reference, f, indent=1, sort_keys=True)


if __name__ == "__main__":
    main()
