"""Level-set shape optimisation with agglomerated polytopic discontinuous Galerkin methods.

Shapes are the negative sublevel set ``{phi < 0}`` of a level-set function
transported by a Runge-Kutta dG scheme on a fixed triangle mesh. Shape
gradients and state equations are solved with an interior-penalty dG method
on polytopes agglomerated from the interface-fitted mesh.
"""
from .optimizer import OptimizationHistory, OptimizerConfig, ShapeOptimizer, optimize

__version__ = "0.1.0"

__all__ = ["OptimizationHistory", "OptimizerConfig", "ShapeOptimizer", "optimize", "__version__"]
