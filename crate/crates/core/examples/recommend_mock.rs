//! Maps a prediction to a provider query and fetches tracks from the bundled
//! mock provider.
//!
//! cargo run --example recommend_mock [-- valence arousal emotion]

use mobile_affect::data::Emotion;
use mobile_affect::recommender::mock::{MockCatalog, MockOptions, MockProvider};
use mobile_affect::recommender::{build_query, fetch, AffectPrediction, GenreMap, ProviderConfig, DEFAULT_LIMIT};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let valence: f64 = args.first().map_or(Ok(0.5), |s| s.parse())?;
    let arousal: f64 = args.get(1).map_or(Ok(-0.2), |s| s.parse())?;
    let emotion: Emotion = args.get(2).map_or(Ok(Emotion::Happy), |s| s.parse())?;

    let mock = MockProvider::start(MockCatalog::seeded(1, 500), MockOptions::default()).await?;
    let config = ProviderConfig::new(&mock.base_url())?;
    let prediction = AffectPrediction::certain(emotion, valence, arousal)?;
    let query = build_query(&prediction, &GenreMap::default(), DEFAULT_LIMIT)?;
    println!("GET {}", config.request_url(&query));
    for track in fetch(&query, &config).await? {
        println!("  {}  {} — {}", track.id, track.title, track.artist);
    }
    Ok(())
}
