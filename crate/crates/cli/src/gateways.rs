use std::sync::Arc;

use anyhow::{bail, Context, Result};
use nl2sql::eval::{gold_echo_gateway, mine_all, Dataset};
use nl2sql::gateway::{Gateway, RemoteGateway, ScriptedGateway};
use nl2sql::pipeline::Gateways;
use nl2sql::{Pipeline, PipelineConfig};

use crate::config::{GatewayConfig, GatewayKind};

/// A model endpoint that does not need a dataset.
pub fn build(cfg: &GatewayConfig) -> Result<Arc<dyn Gateway>> {
    Ok(match cfg.kind {
        GatewayKind::Scripted => match &cfg.rules {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading rule file {}", path.display()))?;
                let gw = ScriptedGateway::from_json(&text)
                    .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
                Arc::new(gw)
            }
            None => Arc::new(ScriptedGateway::new(Vec::new())),
        },
        GatewayKind::Remote => Arc::new(RemoteGateway::new(cfg.remote.clone())?),
        GatewayKind::GoldEcho => bail!("the gold-echo gateway is only available to `eval`"),
    })
}

/// A pipeline whose models are set up for evaluating `ds`.
pub fn pipeline_for_dataset(
    config: PipelineConfig,
    gateway: &GatewayConfig,
    ds: &Dataset,
) -> Result<Pipeline> {
    if gateway.kind != GatewayKind::GoldEcho {
        return Ok(Pipeline::new(config, Gateways::single(build(gateway)?)));
    }
    let offline: Arc<dyn Gateway> = Arc::new(ScriptedGateway::new(Vec::new()));
    let p = Pipeline::new(config, Gateways::single(offline));
    let cards = mine_all(&ds.databases, &p)?;
    let echo: Arc<dyn Gateway> = Arc::new(gold_echo_gateway(&ds.items, &cards)?);
    Ok(p.with_gateways(Gateways::single(echo)))
}

/// Alternate critic model for the matrix row that swaps critics.
pub fn alternate_critic(
    gateway: Option<&GatewayConfig>,
    pipeline: &Pipeline,
    ds: &Dataset,
) -> Result<Option<Arc<dyn Gateway>>> {
    let Some(cfg) = gateway else { return Ok(None) };
    if cfg.kind == GatewayKind::GoldEcho {
        let cards = mine_all(&ds.databases, pipeline)?;
        return Ok(Some(Arc::new(gold_echo_gateway(&ds.items, &cards)?)));
    }
    build(cfg).map(Some)
}
