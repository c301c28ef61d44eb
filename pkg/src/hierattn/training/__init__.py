from ..folds import FoldPlan, kfold_split
from .optim import AdamW, adamw_step
from .schedule import lr_at
from .transfer import FreezePolicy, load_pretrained_partial
from .fit import TrainConfig, TrainingError, TrainingHistory, fit
