"""Pure numpy simplex iteration loop.

Mirror of ``_kernel.pyx``: same pricing, ratio test and tie rules, so both
produce the same pivot sequence. Used when the extension is not built.
"""

import numpy as np

OPTIMAL = 0
UNBOUNDED = 1
PIVOT_LIMIT = 2


def iterate(T, d, x, basis, where, lo, hi, opt_tol, pivot_tol, max_pivots, bland_after, bland):
    """Run primal simplex pivots in place until optimal.

    ``where[j]`` is the row of basic column ``j``, ``-1`` if nonbasic at its
    lower bound and ``-2`` if at its upper bound. Returns
    ``(status, pivots, bland)``.
    """
    m = T.shape[0]
    pivots = 0
    degen = 0
    movable = lo < hi
    while True:
        if pivots >= max_pivots:
            return PIVOT_LIMIT, pivots, bland
        at_lo = (where == -1) & movable & (d < -opt_tol)
        at_hi = (where == -2) & movable & (d > opt_tol)
        score = np.where(at_lo, -d, 0.0) + np.where(at_hi, d, 0.0)
        if bland:
            cand = np.flatnonzero(score > 0.0)
            if cand.size == 0:
                return OPTIMAL, pivots, bland
            q = int(cand[0])
        else:
            q = int(np.argmax(score))
            if not score[q] > 0.0:
                return OPTIMAL, pivots, bland
        direction = 1.0 if where[q] == -1 else -1.0

        col = T[:, q] * direction
        xb = x[basis]
        lob = lo[basis]
        hib = hi[basis]
        lim = np.full(m, np.inf)
        dec = col > pivot_tol
        inc = (col < -pivot_tol) & np.isfinite(hib)
        lim[dec] = (xb[dec] - lob[dec]) / col[dec]
        lim[inc] = (hib[inc] - xb[inc]) / (-col[inc])
        lim[lim < 0.0] = 0.0
        thmin = lim.min() if m else np.inf
        flip = hi[q] - lo[q]
        if flip <= thmin:
            if not np.isfinite(flip):
                return UNBOUNDED, pivots, bland
            theta = flip
            r = -1
        else:
            theta = thmin
            tie = 1e-12 * (1.0 + thmin)
            rows = np.flatnonzero(lim <= thmin + tie)
            if bland:
                r = int(rows[np.argmin(basis[rows])])
            else:
                r = int(rows[np.argmax(np.abs(col[rows]))])

        x[basis] -= col * theta
        if r < 0:
            if where[q] == -1:
                x[q] = hi[q]
                where[q] = -2
            else:
                x[q] = lo[q]
                where[q] = -1
        else:
            x[q] += direction * theta
            leave = basis[r]
            if col[r] > 0.0:
                x[leave] = lo[leave]
                where[leave] = -1
            else:
                x[leave] = hi[leave]
                where[leave] = -2
            piv = T[r, q]
            T[r, :] /= piv
            colq = T[:, q].copy()
            colq[r] = 0.0
            # only rows with a nonzero in column q and nonzero columns of row r change
            rows = np.flatnonzero(colq)
            cols = np.flatnonzero(T[r, :])
            Tr = T[r, cols]
            if 2 * rows.size * cols.size < T.size:
                T[np.ix_(rows, cols)] -= np.outer(colq[rows], Tr)
            else:
                T -= np.outer(colq, T[r, :])
            d[cols] -= d[q] * Tr
            basis[r] = q
            where[q] = r
        pivots += 1
        if theta <= 1e-12:
            degen += 1
            if degen >= bland_after:
                bland = True
        else:
            degen = 0
