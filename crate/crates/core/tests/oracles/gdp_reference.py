"""High-precision reference values for the GDP <-> (epsilon, delta) tests.

Run with `python3 gdp_reference.py`; the printed values are frozen into
tests/accounting_oracles.rs. Uses mpmath at 50 significant digits.
"""
from mpmath import mp, mpf, ncdf, exp, sqrt, findroot

mp.dps = 50


def delta(mu, eps):
    mu, eps = mpf(mu), mpf(eps)
    return ncdf(-eps / mu + mu / 2) - exp(eps) * ncdf(-eps / mu - mu / 2)


def mu_for(eps, target):
    return findroot(lambda m: delta(m, eps) - mpf(target), (mpf("1e-4"), mpf(50)), solver="bisect", tol=mpf("1e-45"))


def eps_for(mu, target):
    return findroot(lambda e: delta(mu, e) - mpf(target), (mpf(0), mpf(20)), solver="bisect", tol=mpf("1e-45"))


print("delta grid (mu, eps, delta):")
for mu in ["0.05", "0.1", "0.5", "1", "3", "10"]:
    for eps in ["0", "0.1", "1"]:
        print(f"    ({mu}, {eps}, {mp.nstr(delta(mu, eps), 20)}),")
print("delta(10/2561, 0.01) =", mp.nstr(delta(mpf(10) / 2561, "0.01"), 20))
print("mu(eps=1, delta=1e-5) =", mp.nstr(mu_for("1", "1e-5"), 20))
for e1, e2 in [("0.1", "0.2"), ("0.01", "0.05")]:
    m1, m2, mt = mu_for(e1, "1e-5"), mu_for(e2, "1e-5"), mu_for("1", "1e-5")
    mf = sqrt(mt**2 - 3 * m1**2 - 3 * m2**2)
    print(f"plan {e1}/{e2}: mu1={mp.nstr(m1, 20)} mu2={mp.nstr(m2, 20)} mu_f={mp.nstr(mf, 20)} eps_f={mp.nstr(eps_for(mf, '1e-5'), 20)}")
