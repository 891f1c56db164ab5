"""ResNet-18 complexity under equal-complexity dendritic scaling, plus the entropy checks."""

from dendricomm import complexity, entropy
from dendricomm.dendritic import activation_memory_bits


def main():
    for r in complexity.complexity_table():
        print(f"K={r['K']:>2} params={r['params']:>10,} MMACs={r['mmacs']:.2f} psi={r['psi']:.3f}")
    print("activation bits (point full, dendritic full, dendritic bitmask):",
          activation_memory_bits(8, 8, 1, "full"), activation_memory_bits(4, 4, 4, "full"),
          activation_memory_bits(4, 4, 4, "bitmask"))
    summary = entropy.verify(seed=0, trials=200)
    print("entropy identities:", summary)


if __name__ == "__main__":
    main()
