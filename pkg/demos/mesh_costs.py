"""Print PE-mesh communication costs and eta for a few mesh sizes and dendrite counts."""

from dendricomm import mesh


def main():
    print(f"{'D':>6} {'K':>4} {'C_A':>8} {'C_E':>10} {'C_A_hat':>10} {'C_E_hat':>10} {'eta':>7}")
    for r in mesh.eta_map([16, 64, 256, 1024], [1, 4, 16, 64]):
        print(f"{r.D:>6} {r.K:>4} {r.C_A:>8.1f} {r.C_E:>10.1f} {r.C_A_hat:>10.2f} "
              f"{r.C_E_hat:>10.2f} {r.eta:>7.4f}")
    pts = [(K, mesh.sparse_delivery_cost(mesh.MeshConfig(64, K), 0.85, n_patterns=10, seed=0)[0])
           for K in (1, 4, 16)]
    print("sparse delivery cost at D=64, 85% sparsity:", pts)
    print(f"slope against sqrt(K): {mesh.fit_k_slope(pts):.3f}")


if __name__ == "__main__":
    main()
