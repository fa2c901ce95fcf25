"""contactgrasp: contact-guided dexterous grasp synthesis tools."""

from .errors import (ContactGraspError, ConfigError, DegenerateCloud,
                     DegenerateContacts, InvalidContacts, InvalidK,
                     MissingCloud, NoGraspSurface, NonConverged, NonFinite,
                     SchemaError, TooShort)
from .geometry import (CanonicalPose, PointCloud, PrincipalAxes, canonicalize,
                       compute_pca, detect_cylindricality, slice_cloud)
from .cloud_io import read_cloud, read_obj, read_ply, read_xyz, write_xyz
from .contacts import (Contact, ContactParams, ContactSet, ForceClosureReport,
                       GraspStrategy, check_force_closure, estimate_normals,
                       generate_contacts, grasp_wrenches, refine_contacts,
                       select_strategy)
from .hand import (HandModel, bundled_hand_path, clamp_to_limits,
                   fingertip_jacobian, forward_kinematics, link_transforms,
                   load_hand_model, position_groups)
from .retarget import (GraspTopology, RetargetConfig, RetargetSolution,
                       WristFrame, compute_wrist_frame, extract_topology,
                       solve_retarget, transform_contacts_to_wrist)
from .refine import (GraspPose, RefineConfig, RefineResult, derive_pregrasp,
                     fingertip_contact_force, pd_step, simulate_refinement)
from .gating import (ClusterModel, GatingModel, GeometryFeatures,
                     curriculum_schedule, extract_geometry_features,
                     gating_select, gating_train, hard_case_split, kl_loss,
                     kmeans_fit, normalize_success_rates, pin_categories)
from .rewards import (GoalDiff, RewardWeights, TrajectoryFrame,
                      reward_consistency, reward_goal, reward_proximity,
                      reward_smooth, success_check, total_reward,
                      trajectory_metrics)
from .dataset import (GraspRecord, dataset_stats, read_records,
                      validate_records, write_records)
from .config import PipelineConfig, config_hash, load_config
from .pipeline import SynthResult, subsample, synth_object

__version__ = "0.1.0"
