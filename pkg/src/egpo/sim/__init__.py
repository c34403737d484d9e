from .env import (
    DESTINATION_BONUS,
    DrivingEnv,
    EgoState,
    EnvConfig,
    EpisodeFinishedError,
    Observation,
    StepResult,
    Termination,
    lidar_scan,
    scene_discs,
)
from .geometry import Polyline, frenet_project, ray_disc_distances, wrap_angle
from .scene import Obstacle, SceneConfig, SceneSpec, TrafficVehicle, generate_scene, scene_seeds

__all__ = [
    "DESTINATION_BONUS",
    "DrivingEnv",
    "EgoState",
    "EnvConfig",
    "EpisodeFinishedError",
    "Obstacle",
    "Observation",
    "Polyline",
    "SceneConfig",
    "SceneSpec",
    "StepResult",
    "Termination",
    "TrafficVehicle",
    "frenet_project",
    "generate_scene",
    "lidar_scan",
    "ray_disc_distances",
    "scene_discs",
    "scene_seeds",
    "wrap_angle",
]
