"""Camera geometry: projection, PnP ground-truth annotation, fixture
scene generation, and the seven-segment renderer."""

from .annotate import (AnnotateError, PoseAnnotation, annotate_poses,
                       box_gated_pnp_evaluator, load_correspondence_file,
                       reference_correspondences, save_annotations,
                       study_dataset_from_sequence)
from .camera import GeometryError, project_points, project_rt
from .fixtures import (FixtureError, FixtureScene, SceneSpec,
                       fill_convex_polygon, gen_fixture_scene)
from .pnp import (MAX_ITERATIONS, MIN_CORRESPONDENCES, CorrespondenceSet,
                  PnPError, pnp_solve)
from .sevenseg import ALPHABET, SEGMENTS, SevenSegError, render_seven_segment

__all__ = [
    "ALPHABET", "AnnotateError", "CorrespondenceSet", "FixtureError",
    "FixtureScene", "GeometryError", "MAX_ITERATIONS", "MIN_CORRESPONDENCES",
    "PnPError", "PoseAnnotation", "SEGMENTS", "SceneSpec", "SevenSegError",
    "annotate_poses", "box_gated_pnp_evaluator", "fill_convex_polygon",
    "gen_fixture_scene", "load_correspondence_file", "pnp_solve",
    "project_points", "project_rt", "reference_correspondences",
    "save_annotations", "study_dataset_from_sequence",
]
