"""Triangle meshes, interface fitting, k-means agglomeration and polytopic meshes."""
from .agglomerate import agglomerate, agglomerate_total, extract_interior_submesh
from .generators import disc_mesh, square_mesh
from .polytopic import PolytopicMesh
from .refine import FittedMesh, refine_to_fit
from .simplicial import MeshError, SimplicialMesh

__all__ = ["FittedMesh", "MeshError", "PolytopicMesh", "SimplicialMesh", "agglomerate",
           "agglomerate_total", "disc_mesh", "extract_interior_submesh", "refine_to_fit", "square_mesh"]
