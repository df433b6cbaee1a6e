"""Quick check that the extension imports and agrees with a few closed forms."""
import math

import umstab


def close(a, b, tol):
    assert abs(a - b) <= tol, (a, b)


def main():
    print("umstab", umstab.__version__)

    log = umstab.Utility.log()
    close(log.inverse_marginal(2.0), 0.5, 1e-15)

    ens = umstab.Ensemble(1.0, 64, 20000, 7)
    zero = umstab.Risk.zero()
    sol = umstab.solve_complete(ens.terminal_deflator(zero), log, 1.0)
    close(sol.y, 1.0, 1e-9)
    close(sol.primal_value, 0.0, 1e-9)

    lam = 0.2
    mc, se, closed = umstab.log_value_function(umstab.Risk.constant(lam), 1.0, ens)
    close(closed, 0.5 * lam * lam, 1e-12)
    assert abs(mc - closed) < 4.0 * se + 1e-3, (mc, se, closed)

    gamma = 0.5
    z = ens.terminal_deflator(umstab.Risk.constant(lam))
    power = umstab.solve_complete(z, umstab.Utility.power(gamma), 1.0)
    gp = gamma / (1.0 - gamma)
    close(power.y, math.exp(0.5 * gp * (gp + 1.0) * lam * lam * (1.0 - gamma)), 2e-2)

    for n in (2, 10, 100):
        p = umstab.counterexample_params(n)
        y = umstab.counterexample_multiplier(n)
        assert y > 0.0 and umstab.counterexample_norm_bound(n) >= 0.0, p

    terms = [(n, umstab.Risk.constant(lam * (1.0 + 1.0 / n))) for n in (1, 4, 16)]
    rows = umstab.stability_sweep(umstab.Risk.constant(lam), terms, ens, log, 1.0)
    gaps = [r.value_gap for r in rows]
    assert all(r.error is None for r in rows)
    assert abs(gaps[-1]) < abs(gaps[0]), gaps

    d = umstab.ky_fan_distance([0.0, 1.0, 2.0], [0.0, 1.0, 2.0])
    close(d, 0.0, 0.0)
    print("smoke test ok")


if __name__ == "__main__":
    main()
