"""Voice-taught virtual agent: record, tag, train and talk, with no text in the loop."""

from .audio import AudioClip, decode_wav, encode_wav_pcm16, resample
from .corpus import (
    HEAD_ORDER,
    HEAD_TABLE,
    Corpus,
    DatasetBundle,
    HeadSpec,
    Intonation,
    TaggedUtterance,
    WordFunction,
    WordSpan,
    export_bundle,
    import_bundle,
    load_corpus,
    save_corpus,
)
from .features import (
    FeatureConfig,
    FeatureGrid,
    FeatureMatrix,
    extract_features,
    fit_to_grid,
    normalize,
    visualization_bundle,
)
from .model import (
    Prediction,
    TrainConfig,
    TrainedHead,
    evaluate,
    load_heads,
    predict,
    save_heads,
    train_all_heads,
    train_head,
)
from .world import (
    AgentTurn,
    Correction,
    PlayerMessage,
    Scene,
    SceneObject,
    WorldSession,
    navigate,
    preliminary_world,
)

__version__ = "0.1.0"
