"""Independent high-precision evaluation of the BBO dispersion quantities
frozen into tests/golden/dispersion.json. Run: python3 dispersion_oracle.py"""
import json
from mpmath import mp, mpf, sqrt, cos, sin, atan, pi, diff, findroot, asin

mp.dps = 40
O = [mpf("2.7359"), mpf("0.01878"), mpf("0.01822"), mpf("0.01354")]
E = [mpf("2.3753"), mpf("0.01224"), mpf("0.01667"), mpf("0.01516")]


def n(c, l):
    l = mpf(l)
    return sqrt(c[0] + c[1] / (l * l - c[2]) - c[3] * l * l)


def ne(l, t):
    return 1 / sqrt(cos(t) ** 2 / n(O, l) ** 2 + sin(t) ** 2 / n(E, l) ** 2)


def k(idx, l):
    return 2 * pi * idx / mpf(l)


def dkz(lp, ls, ths, t):
    li = 1 / (1 / mpf(lp) - 1 / mpf(ls))
    ks, ki = k(n(O, ls), ls), k(n(O, li), li)
    thi = asin(-ks * sin(ths) / ki)
    return k(ne(lp, t), lp) - ks * cos(ths) - ki * cos(thi)


def pm(lp, ls, ths_ext):
    ths = ths_ext / n(O, ls)
    return findroot(lambda t: dkz(lp, ls, ths, t), mpf("0.55"))


def rho_fd(l, t):
    # walk-off from its derivative definition tan(rho) = -(1/n) dn/dtheta
    return atan(-diff(lambda x: ne(l, x), t) / ne(l, t))


def ng(f, l):
    return f(l) - l * diff(f, l)


lp = mpf("0.355")
theta_deg = pm(lp, 2 * lp, 0)
# pm along the walk-off for a 1550 nm signal
t = pm(lp, mpf("1.55"), 0)
for _ in range(30):
    t = pm(lp, mpf("1.55"), rho_fd(lp, t) * n(O, "1.55"))
theta_wo = t
c = mpf("299.792458")
delay = mpf(10) * 1000 * abs(ng(lambda l: ne(l, theta_wo), lp) - ng(lambda l: n(O, l), mpf("1.6"))) / c

out = {
    "n_o_0.6328": float(n(O, "0.6328")),
    "n_e_principal_0.6328": float(n(E, "0.6328")),
    "theta_pm_collinear_degenerate_355_rad": float(theta_deg),
    "rho_at_collinear_degenerate_rad": float(rho_fd(lp, theta_deg)),
    "theta_pm_1550_along_walkoff_rad": float(theta_wo),
    "rho_at_1550_along_walkoff_rad": float(rho_fd(lp, theta_wo)),
    "group_delay_355e_1600o_10mm_ps": float(delay),
}
print(json.dumps(out, indent=2))
