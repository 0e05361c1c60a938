"""Checking the hand-written backward pass.

Compares analytic gradients with central differences on random toy
configurations, then shows that a slightly wrong gradient is caught.
"""

from anaxnet.model import toy_gradcheck

for seed in range(1, 11):
    info = {}
    err = toy_gradcheck(seed, h=1e-3, info=info)
    print(f"seed {seed:2d}: max relative error {err:.2e} "
          f"({info['checked']} coords checked, {info['skipped']} skipped at ReLU kinks)")

bad = toy_gradcheck(0, h=1e-3, corrupt=True)
print(f"\ncorrupted gradient: max relative error {bad:.2e}, well above the 1e-4 tolerance")
