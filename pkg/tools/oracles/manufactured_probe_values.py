"""Independent probe values for manufactured sources and jump data.

Recomputes f = [dt] - div(beta grad u) by high-order central differences of
the flux (no reuse of the package's analytic chain rule), and jump data
directly from the exact pieces.  Printed values are frozen into
tests/test_problem.py.

Run: python3 tools/oracles/manufactured_probe_values.py
"""

import numpy as np

import qlips
from qlips import problem as prob_mod

PROBES = {
    # example: (side, point) pairs; points interior to the side's subdomain
    "ex1": [(0, (0.5, 0.5)), (1, (-0.5, 0.5))],
    "ex2": [(0, (-0.5, 0.5)), (1, (0.5, 0.5)), (2, (-0.5, -0.5)),
            (3, (0.5, -0.5))],
    "ex3": [(0, (0.8, 0.0)), (1, (0.1, -0.1))],
    "ex4": [(0, (0.8, 0.1)), (1, (0.2, -0.1))],
    "ex5": [(0, (0.9, 0.9, 0.1)), (1, (0.1, 0.2, 0.15))],
    "ex6": [(0, (0.7, -0.6)), (1, (0.15, 0.2))],
}


def flux_divergence_fd(coef, exact, pt, h):
    dim = len(pt)

    def flux_component(q, k):
        q = np.atleast_2d(np.asarray(q, float))
        u = exact.u(q)
        g = exact.grad(q)
        return (coef.eval(q, u, g) * g[:, k])[0]

    # five-point stencil per spatial direction
    div = 0.0
    for k in range(2):
        e = np.zeros(dim)
        e[k] = h
        div += (-flux_component(pt + 2 * e, k) + 8 * flux_component(pt + e, k)
                - 8 * flux_component(pt - e, k)
                + flux_component(pt - 2 * e, k)) / (12 * h)
    return div


def dt_fd(exact, pt, h):
    def val(q):
        return exact.u(np.atleast_2d(np.asarray(q, float)))[0]

    e = np.zeros(len(pt))
    e[2] = h
    return (-val(pt + 2 * e) + 8 * val(pt + e) - 8 * val(pt - e)
            + val(pt - 2 * e)) / (12 * h)


def main():
    print("# manufactured source probes: example side x f analytic fd |diff|")
    for ex, probes in PROBES.items():
        kwargs = {"contrast": 1e4} if ex == "ex4" else {}
        p = qlips.builtin_example(ex, **kwargs)
        for side, pt in probes:
            pt = np.asarray(pt, float)
            f = p.sources[side].eval(pt[None, :], np.zeros(1))[0]
            ref = -flux_divergence_fd(p.coefficients[side], p.exacts[side],
                                      pt, 1e-4)
            if p.parabolic:
                ref += dt_fd(p.exacts[side], pt, 1e-4)
            print(f"{ex} side={side} x={tuple(pt)} f={f:.17g} "
                  f"fd={ref:.17g} diff={abs(f - ref):.3e}")

    print("\n# jump probes (params as listed)")
    p4 = qlips.builtin_example("ex4", contrast=1e4)
    pts, _ = qlips.interface_point_and_normal(p4.geometry,
                                              np.array([np.pi / 4, 2.0]))
    w, v = qlips.jump_data_from_exact(p4, pts)
    for i, th in enumerate((np.pi / 4, 2.0)):
        print(f"ex4(contrast=1e4) theta={th!r} w={w[i]:.17g} v={v[i]:.17g}")

    p3 = qlips.builtin_example("ex3", petals=5)
    pts, _ = qlips.interface_point_and_normal(p3.geometry, np.array([0.7]))
    w, v = qlips.jump_data_from_exact(p3, pts)
    print(f"ex3(petals=5) theta=0.7 point={tuple(pts[0])} "
          f"w={w[0]:.17g} v={v[0]:.17g}")

    p5 = qlips.builtin_example("ex5")
    pts, _ = qlips.interface_point_and_normal(p5.geometry, np.array([1.0]),
                                              t=0.1)
    w, v = qlips.jump_data_from_exact(p5, pts)
    print(f"ex5 theta=1.0 t=0.1 point={tuple(pts[0])} "
          f"w={w[0]:.17g} v={v[0]:.17g}")

    p6 = qlips.builtin_example("ex6")
    pts, _ = qlips.interface_point_and_normal(p6.geometry, np.array([2.5]))
    w, v = qlips.jump_data_from_exact(p6, pts)
    print(f"ex6 theta=2.5 w={w[0]:.17g} v={v[0]:.17g}")

    # source probe table for freezing (analytic values only)
    print("\n# frozen table")
    for ex, probes in PROBES.items():
        kwargs = {"contrast": 1e4} if ex == "ex4" else {}
        p = qlips.builtin_example(ex, **kwargs)
        for side, pt in probes:
            pt = np.asarray(pt, float)
            f = p.sources[side].eval(pt[None, :], np.zeros(1))[0]
            print(f'    ("{ex}", {side}, {tuple(pt)}): {f:.17g},')


if __name__ == "__main__":
    main()
