"""
Reverse-mode gradients
======================

The small autodiff engine works on float64 arrays; complex quantities are
carried as (real, imaginary) pairs.  Check a log-determinant gradient and a
tiny convolutional network against central differences.
"""
import numpy as np

from gsmfeedback import autodiff as ad

rng = np.random.default_rng(0)

# log det of a Hermitian positive-definite matrix, gradient inv(Z)
a = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
z = a @ a.conj().T + np.eye(4)
re, im = ad.Parameter(z.real.copy()), ad.Parameter(z.imag.copy())
ld = ad.hermitian_logdet(re, im)
print("log det", float(ld.values), "vs eigenvalues", np.sum(np.log(np.linalg.eigvalsh(z))))
worst, _ = ad.finite_difference_check(lambda: ad.hermitian_logdet(re, im), [re, im])
print(f"log-det gradient, worst relative error {worst:.1e}")


class Tiny(ad.Module):
    def __init__(self, rng):
        self.conv = ad.Conv1d(2, 4, 5, rng)
        self.bn = ad.BatchNorm(4)
        self.fc = ad.Linear(4 * 8, 3, rng)

    def forward(self, x):
        h = ad.relu(self.bn(self.conv(x)))
        return self.fc(ad.reshape(h, (x.shape[0], -1)))


net = Tiny(rng)
x = rng.standard_normal((6, 2, 8))
target = rng.standard_normal((6, 3))


def loss():
    return ad.mean(ad.square(ad.sub(net(x), target)))


worst, records = ad.finite_difference_check(loss, net.parameters())
print(f"conv/batch-norm/linear net: {len(records)} coordinates, worst relative error {worst:.1e}")

# a few plain gradient-descent steps
for step in range(5):
    net.zero_grad()
    out = loss()
    ad.backward(out)
    for p in net.parameters():
        p.values -= 0.1 * p.grad
    print("step", step, "loss", round(float(out.values), 4))
