//! Runs the HTTP API with freshly initialised arch3 models and an in-process
//! mock provider, so every endpoint answers without trained weights.
//!
//! cargo run --release --example serve [-- port]
//! curl -X POST --data-binary @face.png localhost:8080/v1/predict

use std::net::SocketAddr;

use mobile_affect::recommender::mock::{MockCatalog, MockOptions, MockProvider};
use mobile_affect::recommender::ProviderConfig;
use mobile_affect::service::{serve, Predictor, ServiceConfig};
use mobile_affect::{ArchId, Head, Model, SeededRng};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let port: u16 = std::env::args().nth(1).map_or(Ok(8080), |s| s.parse())?;
    let mut rng = SeededRng::new(0);
    let predictor = Predictor::new(
        Model::build(ArchId::MobileNet, Head::Emotion, &mut rng)?,
        Model::build(ArchId::MobileNet, Head::ValenceArousal, &mut rng)?,
    )?;
    let mock = MockProvider::start(MockCatalog::seeded(1, 500), MockOptions::default()).await?;
    let ratings = std::env::temp_dir().join("affect-example-ratings.jsonl");
    let config = ServiceConfig::new(ratings)
        .with_predictor(predictor)
        .with_provider(ProviderConfig::new(&mock.base_url())?)
        .with_static_dir("app");
    let addr = SocketAddr::from(([127, 0, 0, 1], port));
    println!("listening on http://{addr} (mock provider at {})", mock.base_url());
    serve(config, addr).await?;
    Ok(())
}
