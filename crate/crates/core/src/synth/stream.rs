use super::{generate_sample, GenerationConfig, SamplePair};
use crate::error::{Error, Result};
use crate::volume::{LabelMap, Volume3D};

/// One training subject: FeTA labels and the image they were drawn on.
#[derive(Clone, Debug)]
pub struct Subject {
    pub id: String,
    pub labels: LabelMap,
    pub intensity: Volume3D,
}

/// Endless sample iterator cycling over subjects: sample `i` comes from
/// subject `i mod n`. Every item is reproducible from its index alone.
pub struct SampleStream<'a> {
    subjects: &'a [Subject],
    cfg: &'a GenerationConfig,
    next: u64,
}

impl<'a> SampleStream<'a> {
    pub fn new(subjects: &'a [Subject], cfg: &'a GenerationConfig) -> Result<Self> {
        if subjects.is_empty() {
            return Err(Error::EmptySample);
        }
        cfg.validate()?;
        Ok(Self {
            subjects,
            cfg,
            next: 0,
        })
    }

    /// Starts at `index` instead of 0.
    pub fn starting_at(mut self, index: u64) -> Self {
        self.next = index;
        self
    }

    pub fn subject_for(&self, index: u64) -> &'a Subject {
        &self.subjects[(index % self.subjects.len() as u64) as usize]
    }

    pub fn sample(&self, index: u64) -> Result<SamplePair> {
        let s = self.subject_for(index);
        let mut pair = generate_sample(&s.labels, &s.intensity, self.cfg, index)?;
        pair.provenance.subject_id = Some(s.id.clone());
        Ok(pair)
    }
}

impl Iterator for SampleStream<'_> {
    type Item = Result<SamplePair>;

    fn next(&mut self) -> Option<Self::Item> {
        let i = self.next;
        self.next += 1;
        Some(self.sample(i))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::SplitConfig;
    use crate::phantom::fetal_phantom;

    #[test]
    fn cycles_and_replays() {
        let subjects: Vec<Subject> = (0..2)
            .map(|i| {
                let (labels, intensity) = fetal_phantom([32, 32, 32], [3.0; 3], 3.0, i).unwrap();
                Subject {
                    id: format!("sub-{i}"),
                    labels,
                    intensity,
                }
            })
            .collect();
        let cfg = GenerationConfig {
            split: SplitConfig {
                k_range: (1, 2),
                ..Default::default()
            },
            ..Default::default()
        };
        let stream = SampleStream::new(&subjects, &cfg).unwrap();
        let first: Vec<SamplePair> = stream.take(3).map(Result::unwrap).collect();
        let ids: Vec<_> = first.iter().map(|p| p.provenance.subject_id.clone().unwrap()).collect();
        assert_eq!(ids, ["sub-0", "sub-1", "sub-0"]);
        let replay = SampleStream::new(&subjects, &cfg).unwrap().starting_at(2).next().unwrap().unwrap();
        assert_eq!(replay.image, first[2].image);
        assert!(matches!(SampleStream::new(&[], &cfg), Err(Error::EmptySample)));
    }
}
