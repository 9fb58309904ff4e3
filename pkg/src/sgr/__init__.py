"""Spherical geometry representation toolkit.

Maps genus-zero triangle meshes onto the unit sphere, unwraps them into
regular 2D signal grids, reconstructs meshes via spherical Delaunay
triangulation, and evaluates geometric quality.
"""

from .mesh import (
    TriangleMesh,
    TopologyReport,
    MeshError,
    TopologyError,
    load_mesh,
    save_mesh,
    validate_topology,
    face_adjacency,
    uniform_laplacian,
)
from .equalarea import square_to_sphere, sphere_to_square, uniform_grid
from .progressive import ProgressiveMesh, VertexSplit, simplify_to_tetrahedron
from .parameterize import (
    SphericalEmbedding,
    ParamConfig,
    StretchStats,
    KernelRegion,
    embed_base,
    polygon_kernel,
    insert_vertex,
    face_stretch,
    stretch_energy,
    optimize_vertex,
    parameterize,
)
from .codec import (
    SgrMap,
    TriangleLocator,
    BarycentricHit,
    build_locator,
    locate,
    bake,
    bake_vertices_only,
    reconstruct,
    center_symmetric_pad,
    write_sgr,
    read_sgr,
)
from .metrics import (
    RegWeights,
    MetricsReport,
    normals_consistency,
    laplacian_smoothing,
    edge_length_reg,
    geometric_reg_total,
    aspect_ratio,
    chamfer_distance,
    f_score,
)

__version__ = "0.1.0"
