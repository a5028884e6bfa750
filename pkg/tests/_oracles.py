"""Slow, direct reference implementations shared by the test modules."""

import math

import numpy as np


def half_up(v):
    return int(math.floor(v + 0.5))


def naive_rect_sum(img, x, y, w, h):
    return int(img[y:y + h, x:x + w].astype(np.int64).sum())


def naive_scaled_rects(feature, scale):
    """Scale each rect's edges independently, then rebalance weight 0."""
    out = []
    for r, wt in feature.rects:
        x0, y0 = half_up(r.x * scale), half_up(r.y * scale)
        x1, y1 = half_up((r.x + r.w) * scale), half_up((r.y + r.h) * scale)
        out.append([x0, y0, x1 - x0, y1 - y0, wt])
    balance = sum(wt * r.w * r.h for r, wt in feature.rects)
    if scale != 1 and abs(balance) < 1e-9:
        rest = 0
        for x, y, w, h, wt in out[1:]:
            rest += wt * w * h
        out[0][4] = -rest / (out[0][2] * out[0][3])
    return out


def naive_accept(model, gray, x, y, scale):
    """Direct per-window cascade evaluation from raw pixel sums."""
    ww, wh = half_up(model.window_w * scale), half_up(model.window_h * scale)
    win = gray[y:y + wh, x:x + ww].astype(np.int64)
    area = ww * wh
    s = int(win.sum())
    sq = int((win * win).sum())
    var = area * sq - s * s
    nf = math.sqrt(float(var)) if var > 0 else float(area)
    for stage in model.stages:
        total = 0.0
        for wc in stage.weak:
            value = 0.0
            for i, (rx, ry, rw, rh, wt) in enumerate(naive_scaled_rects(model.features[wc.feature], scale)):
                term = naive_rect_sum(gray, x + rx, y + ry, rw, rh) * wt
                value = term if i == 0 else value + term
            total += wc.left if value < wc.threshold * nf else wc.right
        if total < stage.threshold:
            return False
    return True
