"""Compare analytic and simulated GEMM global-memory traffic as K grows."""

from dendricomm import gemm


def main():
    rows = gemm.dendritic_reduction_sweep(256, 256, 256, [1, 4, 16], Q=8192, B_M=8, B_N=8, B_L=16)
    for r in rows:
        print(f"K={r['K']:>2} G={r['G']:>2} reads sim={r['reads_sim']:>8} "
              f"analytic={r['reads_analytic']:>10.0f} read ratio={r['read_ratio']:.3f} "
              f"write ratio={r['write_ratio']:.3f}")
    shape = gemm.GemmShape(64, 64, 64)
    plan = gemm.TilePlan(8, 8, 64, 4, "grouped")
    sched = gemm.build_schedule(shape, plan)
    for policy in ("none", "lru", "belady"):
        rep = gemm.simulate_cache(sched, gemm.CacheModel(0 if policy == "none" else 5 * 8 * 64 * 2, policy))
        print(f"{policy:>7}: {rep.reads_global} reads")


if __name__ == "__main__":
    main()
