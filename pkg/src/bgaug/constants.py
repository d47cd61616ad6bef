"""Pipeline constants fixed by the method, kept in one table."""

FRAME_WIDTH = 160
FRAME_HEIGHT = 160
CROP_HEIGHT = 96  # pitch augmentation keeps 96 contiguous rows
MAX_ROW_OFFSET = FRAME_HEIGHT - CROP_HEIGHT
CENTER_ROW_OFFSET = MAX_ROW_OFFSET // 2  # evaluation crop: middle 96 rows
PITCH_DELTA_TOP_DEG = 14.0  # top-96 crop vs middle-96 crop

MASK_SIGMA_PX = 1.0
MASK_SOFTENING_DEFAULT = True

STEPS_PER_EPOCH = 320
BATCH_SIZE = 64
TRAINING_EPOCHS = 100
VALIDATION_FRACTION = 0.2

# Reference dataset sizes, used for sizing synthetic test manifests.
DATASET_SIZES = {"D1": 2629, "D2": 1119, "D3": 8737}

PIPELINE_CONSTANTS = {
    "frame_size": (FRAME_WIDTH, FRAME_HEIGHT),
    "crop_size": (FRAME_WIDTH, CROP_HEIGHT),
    "mask_sigma_px": MASK_SIGMA_PX,
    "mask_softening_default": MASK_SOFTENING_DEFAULT,
    "steps_per_epoch": STEPS_PER_EPOCH,
    "batch_size": BATCH_SIZE,
    "samples_per_epoch": STEPS_PER_EPOCH * BATCH_SIZE,
    "validation_fraction": VALIDATION_FRACTION,
    "eval_row_offset": CENTER_ROW_OFFSET,
    "pitch_delta_top_deg": PITCH_DELTA_TOP_DEG,
}
