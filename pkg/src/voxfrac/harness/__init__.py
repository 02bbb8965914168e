from .datagen import SceneConfig, generate_dataset, random_shot, shoot
from .oracle import seed_count, synthetic_fracture_oracle
from .physics import RigidBody, World, closest_point_on_mesh
from .runtime import build_scene, fracture_pipeline, replace_with_fragments, run_simulation, runtime_step
