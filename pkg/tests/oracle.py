"""Slow, independent reference implementations used to cross-check the solver.

Everything here is plain Python over lists; no numpy, no shared helpers
with the package beyond its data types.
"""

import math
import statistics


def optimality(rows, directions, weights):
    """(d, d_s, opt) per row: weighted, variance-normalised distance to the utopia point."""
    cols = list(zip(*rows))
    utopia = [max(c) if d == "max" else min(c) for c, d in zip(cols, directions)]
    spans = [max(c) - min(c) for c in cols]
    variances = [statistics.pvariance(c) for c in cols]

    def dist(deltas):
        total = math.fsum(
            (w * dv) ** 2 / var
            for w, dv, var, span in zip(weights, deltas, variances, spans)
            if var > 0 and span > 0
        )
        return math.sqrt(total)

    max_distance = dist(spans)
    out = []
    for row in rows:
        d = dist([v - u for v, u in zip(row, utopia)])
        if max_distance == 0:
            out.append((d, 0.0, math.inf))
            continue
        d_s = min(d / max_distance, 1.0)
        out.append((d, d_s, math.inf if d_s == 0 else 1 / d_s))
    return out


def ranking(variables, scores):
    """Indices sorted by descending opt, ties by the variable key."""
    def key(i):
        opt = scores[i]
        return (0, 0.0, variables[i].key) if opt == math.inf else (1, -float(f"{opt:.12g}"), variables[i].key)
    return sorted(range(len(variables)), key=key)


def brute_force_designs(feasible, opts, mf, w):
    """Reference design selection over a feasible list.

    ``opts``, ``mf`` and ``w`` are aligned with ``feasible``. Returns a dict
    of label -> index into ``feasible``.
    """
    order = ranking(feasible, opts)
    classes = []
    for i in order:
        sig = feasible[i].signature
        if sig not in [c[0] for c in classes]:
            classes.append((sig, []))
        next(c for c in classes if c[0] == sig)[1].append(i)
    classes = classes[:3]
    out = {f"d{k}": members[0] for k, (_, members) in enumerate(classes)}
    pool = [i for i in order if any(i in members for _, members in classes)]
    dm = min(pool, key=lambda i: mf[i])  # min keeps the first, i.e. best-ranked, on ties
    dw = min(pool, key=lambda i: w[i])

    def norm(values, i):
        lo, hi = min(values), max(values)
        return 0.0 if hi == lo else (values[i] - lo) / (hi - lo)

    def cost(i):
        return norm(mf, i) + norm(w, i)

    out["dm"], out["dw"] = dm, dw
    out["dwm"] = dw if cost(dw) < cost(dm) else dm
    return out
