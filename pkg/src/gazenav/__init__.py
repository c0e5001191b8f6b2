"""gazenav: gaze-contingent navigation-intention decoding coupled to an
autonomous wheelchair simulator (grid planning + dynamic window control)."""

from .world import (BBox2D, CameraModel, CellState, DynamicObstacle,
                    OccupancyGrid, Pose, Scenario, SceneObject,
                    VelocityCommand, dynamic_obstacle_position, inflate,
                    load_scenario, project_objects, save_scenario,
                    step_kinematics, wrap_angle)
from .gaze import (AveragedBox, GazeGenParams, GazeSample, NormalizedGaze,
                   TaskClass, accumulate_heatmap, hit_test, normalize_gaze,
                   synthesize_dataset, synthesize_trace, update_averaged_box)
from .classify import (CvReport, KnnModel, LabeledPoint, SvmModel,
                       cross_validate, load_model, predict_knn, predict_svm,
                       save_model, train_knn, train_svm)
from .intent import (DecoderState, GoalDispatch, IntentBuffer, decoder_step,
                     push_frame, vote, vote_color)
from .nav import (DwaConfig, ObstacleEstimate, PlannedPath, carrot_waypoint,
                  dwa_step, goal_reached, plan_dijkstra)
from .sim import (AggregateReport, BatchCase, GazeScript, LookAt, LookAway,
                  RunMetrics, SimConfig, Wink, intent_accuracy_eval,
                  replay_metrics, run_batch, run_scenario)

__version__ = "0.1.0"
