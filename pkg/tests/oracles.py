"""Independent reference implementations used to cross-check the library.

These deliberately take different algorithmic routes (quaternions instead of
SVD, explicit loops instead of vectorized code, exhaustive enumeration
instead of combinatorial solvers) so agreement is meaningful.
"""
import itertools

import numpy as np


def horn_similarity_mpjpe(source, target):
    """Procrustes-aligned mean error via Horn's quaternion method."""
    src = np.asarray(source, dtype=float)
    tgt = np.asarray(target, dtype=float)
    mu_s = src.mean(axis=0)
    mu_t = tgt.mean(axis=0)
    s0 = src - mu_s
    t0 = tgt - mu_t
    m = s0.T @ t0
    sxx, sxy, sxz = m[0]
    syx, syy, syz = m[1]
    szx, szy, szz = m[2]
    n = np.array([
        [sxx + syy + szz, syz - szy, szx - sxz, sxy - syx],
        [syz - szy, sxx - syy - szz, sxy + syx, szx + sxz],
        [szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy],
        [sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz],
    ])
    vals, vecs = np.linalg.eigh(n)
    q = vecs[:, np.argmax(vals)]
    w, x, y, z = q
    rot = np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])
    rotated = s0 @ rot.T
    scale = float(np.sum(rotated * t0)) / float(np.sum(s0 * s0))
    aligned = scale * rotated + mu_t
    return float(np.mean(np.linalg.norm(aligned - tgt, axis=-1)))


def brute_force_assignment_total(sim):
    """Max total over all injections of the smaller index set, by enumeration.

    Totals are accumulated in row-index order so the result is bitwise
    comparable to a row-ordered sum over the winning pair set.
    """
    n_a, n_b = sim.shape
    if n_a == 0 or n_b == 0:
        return 0.0
    best = -np.inf
    if n_a <= n_b:
        candidates = (list(enumerate(perm))
                      for perm in itertools.permutations(range(n_b), n_a))
    else:
        candidates = (sorted((i, j) for j, i in enumerate(perm))
                      for perm in itertools.permutations(range(n_a), n_b))
    for pairs in candidates:
        total = 0.0
        for i, j in pairs:
            total += float(sim[i, j])
        best = max(best, total)
    return best


def greedy_root_match_loops(pred_roots, gt_roots):
    """Plain-loop re-implementation of global nearest-first root pairing."""
    n_p, n_g = len(pred_roots), len(gt_roots)
    cells = []
    for i in range(n_p):
        for j in range(n_g):
            d = float(np.linalg.norm(np.asarray(pred_roots[i]) - np.asarray(gt_roots[j])))
            cells.append((d, i, j))
    cells.sort(key=lambda c: (c[0], c[1] * n_g + c[2]))
    used_p, used_g, pairs = set(), set(), []
    for d, i, j in cells:
        if i in used_p or j in used_g:
            continue
        pairs.append((i, j))
        used_p.add(i)
        used_g.add(j)
    return pairs, [i for i in range(n_p) if i not in used_p], \
        [j for j in range(n_g) if j not in used_g]


def set_pck_loops(pred_set, gt_set, threshold_mm, root_index, absolute):
    """Loop-based set PCK with greedy matching and all-miss scoring."""
    total = sum(len(g) for g in (p.joints for p in gt_set))
    if total == 0:
        return 1.0
    pred_roots = [p.joints[root_index] for p in pred_set]
    gt_roots = [g.joints[root_index] for g in gt_set]
    pairs, _, _ = greedy_root_match_loops(pred_roots, gt_roots)
    correct = 0
    for i, j in pairs:
        for k in range(gt_set[j].joints.shape[0]):
            if absolute:
                d = np.linalg.norm(pred_set[i].joints[k] - gt_set[j].joints[k])
            else:
                pr = pred_set[i].joints[k] - pred_set[i].joints[root_index]
                gr = gt_set[j].joints[k] - gt_set[j].joints[root_index]
                d = np.linalg.norm(pr - gr)
            if d < threshold_mm:
                correct += 1
    return correct / total


def ap_root_loops(pred_set, gt_set, radius_mm, root_index):
    """Loop-based average precision over the confidence ranking."""
    order = sorted(range(len(pred_set)),
                   key=lambda i: (-float(np.mean(pred_set[i].conf)), i))
    claimed = set()
    flags = []
    for i in order:
        root = pred_set[i].joints[root_index]
        best_j, best_d = -1, radius_mm
        for j in range(len(gt_set)):
            if j in claimed:
                continue
            d = float(np.linalg.norm(root - gt_set[j].joints[root_index]))
            if d < best_d:
                best_d, best_j = d, j
        if best_j >= 0:
            claimed.add(best_j)
            flags.append(True)
        else:
            flags.append(False)
    if len(gt_set) == 0:
        return 1.0 if not pred_set else 0.0
    ap = 0.0
    tp = 0
    for rank, flag in enumerate(flags, start=1):
        if flag:
            tp += 1
            ap += tp / rank
    return ap / len(gt_set)


def f1_loops(pred_set, gt_set, threshold_m, root_index):
    """F1 with exhaustive optimal person pairing (small sets only)."""
    thr = threshold_m * 1000.0
    n_p, n_g = len(pred_set), len(gt_set)
    best_pairs = []
    if n_p and n_g:
        best_cost = np.inf
        if n_p <= n_g:
            for perm in itertools.permutations(range(n_g), n_p):
                cost = sum(
                    float(np.linalg.norm(pred_set[i].joints[root_index]
                                         - gt_set[j].joints[root_index]))
                    for i, j in enumerate(perm))
                if cost < best_cost:
                    best_cost = cost
                    best_pairs = list(enumerate(perm))
        else:
            for perm in itertools.permutations(range(n_p), n_g):
                cost = sum(
                    float(np.linalg.norm(pred_set[i].joints[root_index]
                                         - gt_set[j].joints[root_index]))
                    for j, i in enumerate(perm))
                if cost < best_cost:
                    best_cost = cost
                    best_pairs = [(i, j) for j, i in enumerate(perm)]
    tp = fp = fn = 0
    used_p = {i for i, _ in best_pairs}
    used_g = {j for _, j in best_pairs}
    for i, j in best_pairs:
        for k in range(gt_set[j].joints.shape[0]):
            d = float(np.linalg.norm(pred_set[i].joints[k] - gt_set[j].joints[k]))
            if d < thr:
                tp += 1
            else:
                fp += 1
                fn += 1
    for i in range(n_p):
        if i not in used_p:
            fp += pred_set[i].joints.shape[0]
    for j in range(n_g):
        if j not in used_g:
            fn += gt_set[j].joints.shape[0]
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)
