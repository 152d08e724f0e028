//! Checkpoint directories: one file per network role plus optimizer state.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::nets::{AgentNets, NetSizes, Variant};
use crate::error::{Error, Result};
use crate::neuralnet::checkpoint::{load_network, load_optimizer, save_network, save_optimizer};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Meta {
    variant: Variant,
}

const FILES: [&str; 4] = ["actor.json", "actor_target.json", "critic.json", "critic_target.json"];

pub fn save_nets<T: Scalar>(nets: &AgentNets<T>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("meta.json"), serde_json::to_string(&Meta { variant: nets.variant })?)?;
    for (file, net) in FILES.iter().zip([&nets.actor, &nets.actor_target, &nets.critic, &nets.critic_target]) {
        save_network(net, &dir.join(file))?;
    }
    save_optimizer(&nets.actor_opt, &dir.join("actor_adam.json"))?;
    save_optimizer(&nets.critic_opt, &dir.join("critic_adam.json"))?;
    Ok(())
}

/// Loads a checkpoint and checks it against the expected architecture.
pub fn load_nets<T: Scalar>(dir: &Path, variant: Variant, sizes: &NetSizes) -> Result<AgentNets<T>> {
    let meta: Meta = serde_json::from_str(&fs::read_to_string(dir.join("meta.json"))?)?;
    let [actor, actor_target, critic, critic_target] = FILES.map(|f| load_network::<T>(&dir.join(f)));
    let (actor, actor_target, critic, critic_target) = (actor?, actor_target?, critic?, critic_target?);
    let nets = AgentNets {
        variant: meta.variant,
        actor_opt: load_optimizer(&dir.join("actor_adam.json"), &actor)?,
        critic_opt: load_optimizer(&dir.join("critic_adam.json"), &critic)?,
        actor,
        actor_target,
        critic,
        critic_target,
    };
    if !nets.matches(variant, sizes) || !nets.actor.same_shape(&nets.actor_target) || !nets.critic.same_shape(&nets.critic_target) {
        return Err(Error::Checkpoint(format!(
            "checkpoint in {} does not match the configured {} architecture",
            dir.display(),
            variant.name()
        )));
    }
    Ok(nets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_and_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let sizes = NetSizes { critic_hidden: vec![5, 3], actor_hidden: vec![4] };
        let nets = AgentNets::<f64>::new(Variant::Cod, &sizes, &mut rng).unwrap();
        save_nets(&nets, dir.path()).unwrap();
        let back: AgentNets<f64> = load_nets(dir.path(), Variant::Cod, &sizes).unwrap();
        assert_eq!(back, nets);
        assert!(load_nets::<f64>(dir.path(), Variant::Iod, &sizes).is_err());
        assert!(load_nets::<f64>(dir.path(), Variant::Cod, &NetSizes::desk()).is_err());
    }
}
