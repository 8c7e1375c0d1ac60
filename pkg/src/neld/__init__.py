"""neld-remap: nonequilibrium Langevin dynamics under Lees-Edwards and Kraynik-Reinelt remapping."""

__version__ = "0.1.0"
