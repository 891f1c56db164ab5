"""Cost models and cross-checks for dendritic neural networks.

Modules:

* ``dendritic``: point and dendritic layer math, gradients, 1-bit masks
* ``complexity``: architecture descriptors, width scaling, parameter/MAC counts
* ``wiring``: Euclidean MST wiring estimates and power-law fits
* ``mesh``: PE-mesh communication costs and sparse rectilinear MSTs
* ``gemm``: tiled GEMM global-memory traffic, analytic and simulated
* ``entropy``: discrete entropy of dendritic outputs and their sum
* ``training``: toy SGD trainer
* ``experiments`` / ``cli``: config-driven runner behind the ``dendricomm`` command
"""

__version__ = "0.1.0"
