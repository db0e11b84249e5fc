"""Independent high-precision oracles for the frozen expectations in the C++ tests.

Run:  python3 tests/oracles/oracles.py
Nothing here imports the C++ code; every value is recomputed from its
defining formula with mpmath at 50 significant digits.
"""
import mpmath as mp

mp.mp.dps = 50


def longtail_profile(K, n_max, imbalance):
    out = []
    for k in range(K):
        v = mp.mpf(n_max) * mp.power(mp.mpf(imbalance), -mp.mpf(k) / (K - 1))
        # round half away from zero
        r = int(mp.floor(v + mp.mpf("0.5")))
        out.append(max(1, r))
    return out


def splits(counts):
    many = sum(1 for n in counts if n > 100)
    few = sum(1 for n in counts if n < 20)
    return many, len(counts) - many - few, few


def cb_weights(counts, beta):
    beta = mp.mpf(beta)
    u = [(1 - beta) / (1 - beta ** n) for n in counts]
    s = sum(u)
    return [len(counts) * x / s for x in u]


def main():
    p10 = longtail_profile(100, 500, 10)
    print("profile(100, 500, 10) =", p10)
    for imb in (10, 50, 100):
        p = longtail_profile(100, 500, imb)
        print(f"IF={imb}: endpoints", p[0], p[-1], "realized IF", mp.nstr(mp.mpf(p[0]) / p[-1], 17),
              "splits", splits(p))
    p100 = longtail_profile(100, 500, 100)
    m, d, f = splits(p100)
    recombined = (mp.mpf("64.05") * m + mp.mpf("35.80") * d + mp.mpf("11.43") * f) / 100
    print("table row recombined with our split sizes:", mp.nstr(recombined, 10))
    toy = longtail_profile(10, 200, 100)
    print("toy profile(10, 200, 100) =", toy, "splits", splits(toy))

    w = cb_weights([500, 5], "0.9999")
    print("cb([500,5], 0.9999) =", [mp.nstr(x, 20) for x in w])
    print("ce((1,0,0), 0) =", mp.nstr(-mp.log(mp.e / (mp.e + 2)), 20))
    print("kl((.5,.5,0,0)) =", mp.nstr(mp.log(2), 20), " kl(onehot,4) =", mp.nstr(mp.log(4), 20))
    print("saturated CE at margin 50, K=2 =", mp.nstr(mp.log(1 + mp.exp(-50)), 20))


if __name__ == "__main__":
    main()
