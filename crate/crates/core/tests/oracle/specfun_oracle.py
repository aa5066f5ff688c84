"""Extended-precision reference values for the specfun unit tests.

Run with: python3 specfun_oracle.py
"""
from mpmath import mp, mpf, besseli, exp, cosh, sinh, nsum, inf, fac, fac2, findroot, tanh

mp.dps = 50


def k_odd(l, s):
    return besseli(l, s) / s**l


def k_even(l, s):
    return nsum(lambda j: s**(2*j+1) / (fac2(2*(j+l)) * fac2(2*j+1)), [0, inf])


print("I0(1)          ", besseli(0, 1))
print("I1(2)          ", besseli(1, 2))
print("e^-100 I0(100) ", exp(-100) * besseli(0, 100))
print("e^-45 I3(45)   ", exp(-45) * besseli(3, 45))
print("e^-50 k2e(40)  ", exp(-50) * k_even(2, mpf(40)))
print("k1o(12)        ", k_odd(1, mpf(12)))
print("k3e(7)         ", k_even(3, mpf(7)))
print("s_star         ", findroot(lambda s: s/2*tanh(s/2) - 1, 2.4))
