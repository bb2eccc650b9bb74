"""Constants for pyisac."""
import math

from scipy.constants import c as SPEED_OF_LIGHT

# Simulation clock
TIME_STEP_S = 0.1

# Site geometry, BS and radar are co-located
BS_HEIGHT_M = 5.0
RADAR_HEIGHT_M = 5.0
VE_ROOF_OFFSET_M = 0.2

# Radar defaults
RADAR_F0_HZ = 28e9
RADAR_BS_HZ = 800e6
RADAR_TC_S = 12e-6
RADAR_TP_S = 15e-6
RADAR_FS_HZ = 64e6
RADAR_AMPLITUDE = 1.0
RADAR_N_AZ = 128
RADAR_N_EL = 4
RADAR_UPSAMPLE = 8
RADAR_DYNAMIC_RANGE_DB = 60.0
GRID_N_R = 512
GRID_N_A = 512
GRID_R_MIN_M = 10.0
GRID_R_MAX_M = 60.0
GRID_HALF_FOV_RAD = math.radians(60.0)

# Image-domain SNR of a 1 m2 point at the reference range
RADAR_SNR_DB = 30.0
RADAR_SNR_REF_RANGE_M = 30.0

TAPER_NONE = "none"
TAPER_HANN = "hann"
TAPERS = (TAPER_NONE, TAPER_HANN)

CHIRP_FULL_SWEEP = "full_sweep"
CHIRP_HALF_SWEEP = "half_sweep"
CHIRP_CONVENTIONS = (CHIRP_FULL_SWEEP, CHIRP_HALF_SWEEP)

INTERP_LINEAR = "linear"
INTERP_NEAREST = "nearest"
INTERP_EXACT = "exact"
INTERP_MODES = (INTERP_LINEAR, INTERP_NEAREST, INTERP_EXACT)

SCALE_DB = "db"
SCALE_LINEAR = "linear"

# Communication defaults
COMM_F0_HZ = 28e9
COMM_BANDWIDTH_HZ = 100e6
VE_ARRAY = (2, 2)
BS_ARRAY_SIZES = ((2, 2), (4, 4), (8, 8), (16, 16), (32, 32), (64, 64))
SNR_MIN_DB = -55.0
SNR_MAX_DB = -10.0
LABEL_SNR_DB = -10.0
LOS_POWER_SHARE = 0.8

AXIS_HORIZONTAL = "horizontal"
AXIS_VERTICAL = "vertical"

# Detection defaults
CFAR_GUARD = 2
CFAR_TRAIN = 8
CFAR_PFA = 1e-4
BEAM_LOGIT_SHARPNESS = 10.0
GAMMA_CLASS = 0.25
NMS_IOU = 0.7
MAX_DETECTIONS = 300
MIN_BOX_PIXELS = 2
CFAR_FLOOR_DB = 15.0
CFAR_MERGE_RADIUS = 2
CLASS_SCORE_SIGMA = 0.25
VE_NOMINAL_HEIGHT_M = 1.7

# Evaluation defaults
EPS_LOG = 1e-7
EPS_PROB = 1e-12
AP_POINTS = 101
IOU_THRESHOLDS_50_95 = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
TAL_LAMBDA = 1.0
TAL_MU = 1.0
MATCH_IOU = 0.5
TOPK_MAX = 5

COST_CCE = "cce"
COST_BCE = "bce"

# Vehicle classes
CLASS_SEDAN = "sedan"
CLASS_HATCHBACK = "hatchback"
CLASS_TRUCK = "truck"

CLASS_LOOKUP = {
    0: CLASS_SEDAN,
    1: CLASS_HATCHBACK,
    2: CLASS_TRUCK,
}
CLASS_INDEX = {value: key for key, value in CLASS_LOOKUP.items()}
C_TARGET = len(CLASS_LOOKUP)

# length, width, height in metres
CLASS_EXTENT = {
    CLASS_SEDAN: (4.6, 1.8, 1.45),
    CLASS_HATCHBACK: (3.9, 1.75, 1.5),
    CLASS_TRUCK: (9.0, 2.5, 3.2),
}

# Base scatterer RCS in m2 per class
CLASS_RCS = {
    CLASS_SEDAN: 10.0,
    CLASS_HATCHBACK: 8.0,
    CLASS_TRUCK: 30.0,
}

TRAJECTORY_STRAIGHT = "straight_road"
TRAJECTORY_ROUNDABOUT = "roundabout"
TRAJECTORY_INTERSECTION = "intersection"

SCENE_A = "A"
SCENE_B = "B"
SCENE_C = "C"

SCENE_LOOKUP = {
    SCENE_A: TRAJECTORY_STRAIGHT,
    SCENE_B: TRAJECTORY_ROUNDABOUT,
    SCENE_C: TRAJECTORY_INTERSECTION,
}

# x_min, x_max, y_min, y_max in metres
SCENE_BOUNDS_M = (0.0, 80.0, -60.0, 60.0)

# Bounding box filtering
BBOX_POWER_FLOOR_DB = -20.0
BBOX_DISTANCE_CAP_M = 8.0

TWO_PI = 2.0 * math.pi
