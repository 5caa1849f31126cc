"""Learnable iterative skeletonization with compact convolutional networks."""

from iterskel.grid import boundary, dilate, elementwise, erode
from iterskel.topology import BettiNumbers, betti, connected_components, is_simple
from iterskel.classic import ThinningPolicy, boolean_thin, morph_skel
from iterskel.bezier import GenParams, Sample, bezier_point, generate, rasterize_curve, thicken
from iterskel.net import NetParams, binarize_ste, init_net, student_arch, teacher_arch
from iterskel.engine import SkelTrace, default_iterations, run
from iterskel.metrics import betti_error, cldice, dice, edt, thickness

__version__ = "0.1.0"
