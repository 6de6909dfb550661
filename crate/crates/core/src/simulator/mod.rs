//! Radiometric forward model and synthetic labeled scenes.

pub mod radiometry;
pub mod scene;

pub use radiometry::{
    apparent_temperature, attenuated_power, invert_range, radiant_power, temperature_from_power,
    RadiometricParams,
};
pub use scene::{
    render_frame, render_index, render_stream, Keyframe, SceneConfig, SensorGeometry, SubpageMode,
    TargetConfig,
};
