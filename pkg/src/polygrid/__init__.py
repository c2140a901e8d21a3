"""polygrid: LiDAR point-cloud streams -> rolling log-odds occupancy grid ->
compact convex-polygon representation of the local static environment."""

from .config import ConfigError, load_config
from .geometry import Point2, Point3, Pose2, point_line_distance_side, polar_of, signed_side
from .gridmap import (CellState, GridConfig, GridMap, classify_cells,
                      integrate_scan, log_odds, map_center, prob_of,
                      raycast_cells, recenter, write_pgm)
from .ground import (FanGrid, FanGridConfig, GroundModel, ObstacleScan,
                     bin_index, build_fan_grid, extract_obstacle_points,
                     fit_ground_lines, ground_clearance, project_to_scan)
from .pipeline import (FrameInput, FrameOutput, FrameRejected, Pipeline,
                       PipelineConfig, RunMetrics, process_frame)
from .simulate import (LidarModel, Scene, builtin_scene, footprint_oracle,
                       make_trajectory, read_scene, simulate_scan, write_scene)
from .vectorize import (BinaryImage, Boundary, DecompositionError, Polygon,
                        VectorizationConfig, binarize_submap, decompose,
                        is_simple, morph_close, polygon_area, simplify,
                        simplify_chain, sunken_vertices, trace_boundaries)

__version__ = "0.1.0"
