use std::collections::BTreeMap;

use super::{GanError, GeneratorNet};
use crate::dataset::{Burst, ConditionClass, LabeledDataset, Origin};
use crate::{derive_seed, seeded};

/// Appends generated bursts to the training split until every fault class
/// with training data matches the largest fault class.
///
/// Multi-channel bursts are generated flattened in channel-major order, so a
/// generator's length must equal `channels × samples`. A class short by at
/// most `tolerance` bursts with no generator is left as is; any larger gap
/// without a trained generator is an error. Returns the balanced dataset and
/// the number of fakes added per class.
pub fn balance_with_fakes(
    dataset: &LabeledDataset,
    generators: &BTreeMap<ConditionClass, GeneratorNet>,
    seed: u64,
    tolerance: usize,
) -> Result<(LabeledDataset, BTreeMap<ConditionClass, usize>), GanError> {
    let deficits = dataset.fault_deficits();
    let mut out = dataset.clone();
    let mut added = BTreeMap::new();
    if deficits.is_empty() {
        return Ok((out, added));
    }
    let (len, channels, fs) = dataset.geometry()?;
    for (class, deficit) in deficits {
        let Some(g) = generators.get(&class) else {
            if deficit <= tolerance {
                log::info!("{class}: {deficit} short of balance, within tolerance; no fakes added");
                continue;
            }
            return Err(GanError::MissingGenerator { class, deficit });
        };
        if !g.trained {
            return Err(GanError::Untrained(class));
        }
        if g.len() != len * channels {
            return Err(GanError::Shape(format!(
                "{class} generator makes {} samples, bursts have {}",
                g.len(),
                len * channels
            )));
        }
        let mut rng = seeded(derive_seed(seed, &format!("fakes/{}", class.name())));
        let fakes = g
            .sample(deficit, &mut rng)?
            .into_iter()
            .map(|s| {
                Burst::new(0, class, channels, fs, s).map(|mut b| {
                    b.origin = Origin::Generated;
                    b
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        out.push_train(fakes);
        added.insert(class, deficit);
    }
    Ok((out, added))
}
