"""A walk through the topology tools on one synthetic sample."""

import numpy as np

from iterskel import betti, boolean_thin, edt, generate, is_simple, morph_skel, thickness
from iterskel.bezier import GenParams
from iterskel.metrics import betti_error


def show(g):
    print("\n".join("".join("#" if v else "." for v in row) for row in g))


# a plus sign: the centre holds four arms together
plus = np.zeros((7, 7), np.float32)
plus[3, 1:6] = 1
plus[1:6, 3] = 1
show(plus)
print("centre simple?", is_simple(plus, (3, 3)))  # no, removing it splits the shape
print("arm tip simple?", is_simple(plus, (3, 1)))
print("betti:", betti(plus))

# a branching tube image with its thinned label
smp = generate(GenParams(dims=(48, 48), seed=4))
print("\nimage betti", betti(smp.image), "label betti", betti(smp.skeleton))
print("max distance to background: %.2f" % edt(smp.image).max())

# the morphological skeleton is thin too, but it breaks apart
for name, sk in (("boolean", boolean_thin(smp.image)), ("morph", morph_skel(smp.image))):
    avg, mx, _ = thickness(sk)
    b0, b1 = betti_error(sk, smp.image)
    print(f"{name:8s} pixels={int(sk.sum()):4d}  avg={avg:.3f} max99={mx:.3f}  b0_err={b0} b1_err={b1}")

show(smp.skeleton[8:40, 8:40])
