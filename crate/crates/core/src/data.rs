//! Interaction logs: loading, id remapping, per-user splitting and the
//! on-disk split manifest.
//!
//! Raw files hold one `raw_user raw_item` pair per line (tab or space
//! separated, `#` comments allowed). Raw ids are mapped to dense indices in
//! first-seen order and repeated pairs collapse to a single interaction,
//! since the interaction matrix is binary.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Deduplicated user–item interactions over contiguous index spaces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionDataset {
    pub n_users: usize,
    pub n_items: usize,
    pub pairs: Vec<(usize, usize)>,
    pub user_degree: Vec<usize>,
    pub item_degree: Vec<usize>,
}

impl InteractionDataset {
    /// Builds a dataset from index pairs, dropping repeated pairs (first
    /// occurrence wins) and computing degrees.
    pub fn from_pairs(n_users: usize, n_items: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut kept = Vec::new();
        let mut user_degree = vec![0usize; n_users];
        let mut item_degree = vec![0usize; n_items];
        for (u, i) in pairs {
            if u >= n_users || i >= n_items {
                return Err(Error::InvalidArgument(format!(
                    "pair ({u}, {i}) out of range for {n_users} users x {n_items} items"
                )));
            }
            if seen.insert((u, i)) {
                kept.push((u, i));
                user_degree[u] += 1;
                item_degree[i] += 1;
            }
        }
        Ok(Self {
            n_users,
            n_items,
            pairs: kept,
            user_degree,
            item_degree,
        })
    }

    /// |D|
    pub fn n_interactions(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Total node count of the bipartite graph, |U| + |I|.
    pub fn n_nodes(&self) -> usize {
        self.n_users + self.n_items
    }

    /// Items of each user, in dataset order.
    pub fn user_items(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_users];
        for &(u, i) in &self.pairs {
            out[u].push(i);
        }
        out
    }

    pub fn pair_set(&self) -> HashSet<(usize, usize)> {
        self.pairs.iter().copied().collect()
    }
}

/// Raw id tables produced while loading. Position is the dense index.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    pub users: Vec<String>,
    pub items: Vec<String>,
}

impl IdMap {
    /// `raw_id index` lines.
    pub fn to_lines(ids: &[String]) -> String {
        let mut out = String::new();
        for (idx, raw) in ids.iter().enumerate() {
            let _ = writeln!(out, "{raw} {idx}");
        }
        out
    }
}

/// Loads an interaction log from disk.
pub fn load_interactions(path: impl AsRef<Path>) -> Result<InteractionDataset> {
    load_with_ids(path).map(|(ds, _)| ds)
}

/// Loads an interaction log and also returns the raw id tables.
pub fn load_with_ids(path: impl AsRef<Path>) -> Result<(InteractionDataset, IdMap)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_interactions(&text, path)
}

/// Parses interaction text; `origin` is only used in error messages.
pub fn parse_interactions(text: &str, origin: &Path) -> Result<(InteractionDataset, IdMap)> {
    let mut user_index: HashMap<&str, usize> = HashMap::new();
    let mut item_index: HashMap<&str, usize> = HashMap::new();
    let mut ids = IdMap::default();
    let mut pairs = Vec::new();

    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let (Some(raw_user), Some(raw_item), None) = (tokens.next(), tokens.next(), tokens.next()) else {
            return Err(Error::Parse {
                path: origin.to_path_buf(),
                line: lineno + 1,
                msg: format!("expected `user item`, got {line:?}"),
            });
        };
        let u = *user_index.entry(raw_user).or_insert_with(|| {
            ids.users.push(raw_user.to_string());
            ids.users.len() - 1
        });
        let i = *item_index.entry(raw_item).or_insert_with(|| {
            ids.items.push(raw_item.to_string());
            ids.items.len() - 1
        });
        pairs.push((u, i));
    }

    if pairs.is_empty() {
        return Err(Error::EmptyDataset(origin.display().to_string()));
    }
    let ds = InteractionDataset::from_pairs(ids.users.len(), ids.items.len(), pairs)?;
    Ok((ds, ids))
}

/// Train / validation / test partition of a dataset.
///
/// `train` keeps the full user and item index spaces, so entities whose
/// interactions all landed in validation or test still own an embedding row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitDataset {
    pub train: InteractionDataset,
    pub validation: Vec<(usize, usize)>,
    pub test: Vec<(usize, usize)>,
    pub split_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            validation: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::InvalidArgument(format!("bad split ratios {parts:?}")));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "split ratios must sum to 1, got {parts:?}"
            )));
        }
        Ok(())
    }

    /// (train, validation, test) counts for a user with `n` interactions.
    /// Held-out parts are floored; the remainder goes to train.
    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        let held = |r: f64| ((r * n as f64) + 1e-9).floor() as usize;
        let n_val = held(self.validation).min(n);
        let n_test = held(self.test).min(n - n_val);
        (n - n_val - n_test, n_val, n_test)
    }
}

/// Per-user random split. Each user's interactions are shuffled by a
/// generator keyed on `(seed, user)` so the split does not depend on the
/// order users appear in the file.
pub fn split_per_user(ds: &InteractionDataset, ratios: SplitRatios, seed: u64) -> Result<SplitDataset> {
    ratios.validate()?;
    let mut train = Vec::with_capacity(ds.n_interactions());
    let mut validation = Vec::new();
    let mut test = Vec::new();

    for (u, mut items) in ds.user_items().into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u as u64);
        items.shuffle(&mut rng);
        let (n_train, n_val, _) = ratios.counts(items.len());
        for (k, &i) in items.iter().enumerate() {
            if k < n_train {
                train.push((u, i));
            } else if k < n_train + n_val {
                validation.push((u, i));
            } else {
                test.push((u, i));
            }
        }
    }

    Ok(SplitDataset {
        train: InteractionDataset::from_pairs(ds.n_users, ds.n_items, train)?,
        validation,
        test,
        split_seed: seed,
    })
}

const MANIFEST_MAGIC: &str = "# sccf split manifest v1";

impl SplitDataset {
    pub fn n_users(&self) -> usize {
        self.train.n_users
    }

    pub fn n_items(&self) -> usize {
        self.train.n_items
    }

    /// `u i split_tag` lines behind a two-line header.
    pub fn to_manifest_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MANIFEST_MAGIC}");
        let _ = writeln!(
            out,
            "# n_users {} n_items {} split_seed {}",
            self.n_users(),
            self.n_items(),
            self.split_seed
        );
        for (tag, pairs) in [
            ("train", &self.train.pairs),
            ("valid", &self.validation),
            ("test", &self.test),
        ] {
            for (u, i) in pairs {
                let _ = writeln!(out, "{u} {i} {tag}");
            }
        }
        out
    }

    pub fn save_manifest(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_manifest_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load_manifest(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_manifest(&text, path)
    }

    pub fn parse_manifest(text: &str, origin: &Path) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            msg,
        };
        let mut header: Option<(usize, usize, u64)> = None;
        let mut train = Vec::new();
        let mut validation = Vec::new();
        let mut test = Vec::new();

        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                let tokens: Vec<&str> = comment.split_whitespace().collect();
                if let ["n_users", nu, "n_items", ni, "split_seed", s] = tokens.as_slice() {
                    let parse = |t: &str| {
                        t.parse::<u64>()
                            .map_err(|e| err(lineno + 1, format!("bad header value {t:?}: {e}")))
                    };
                    header = Some((parse(nu)? as usize, parse(ni)? as usize, parse(s)?));
                }
                continue;
            }
            let tokens: Vec<&str> = line.split_whitespace().collect();
            let [u, i, tag] = tokens.as_slice() else {
                return Err(err(lineno + 1, format!("expected `u i tag`, got {line:?}")));
            };
            let u: usize = u.parse().map_err(|e| err(lineno + 1, format!("bad user index: {e}")))?;
            let i: usize = i.parse().map_err(|e| err(lineno + 1, format!("bad item index: {e}")))?;
            match *tag {
                "train" => train.push((u, i)),
                "valid" => validation.push((u, i)),
                "test" => test.push((u, i)),
                other => return Err(err(lineno + 1, format!("unknown split tag {other:?}"))),
            }
        }

        let (n_users, n_items, split_seed) =
            header.ok_or_else(|| err(0, "missing `# n_users .. n_items .. split_seed ..` header".into()))?;
        for &(u, i) in validation.iter().chain(&test) {
            if u >= n_users || i >= n_items {
                return Err(Error::InvalidArgument(format!("held-out pair ({u}, {i}) out of range")));
            }
        }
        Ok(Self {
            train: InteractionDataset::from_pairs(n_users, n_items, train)?,
            validation,
            test,
            split_seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<(InteractionDataset, IdMap)> {
        parse_interactions(text, Path::new("<mem>"))
    }

    #[test]
    fn counts_degrees_in_first_seen_order() {
        let (ds, ids) = parse("a x\na y\nb y\n").unwrap();
        assert_eq!((ds.n_users, ds.n_items, ds.n_interactions()), (2, 2, 3));
        assert_eq!(ds.user_degree, vec![2, 1]);
        assert_eq!(ds.item_degree, vec![1, 2]);
        assert_eq!(ids.users, vec!["a", "b"]);
        assert_eq!(ids.items, vec!["x", "y"]);
    }

    #[test]
    fn duplicate_lines_collapse() {
        let (ds, _) = parse("a x\na\tx\n").unwrap();
        assert_eq!(ds.n_interactions(), 1);
    }

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let (ds, _) = parse("# header\n\nu1 i1\n  # indented comment\nu2 i1\n").unwrap();
        assert_eq!(ds.n_interactions(), 2);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        match parse("a x\nlonely\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(parse("a x extra\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(matches!(parse(""), Err(Error::EmptyDataset(_))));
        assert!(matches!(parse("# only comments\n"), Err(Error::EmptyDataset(_))));
    }

    #[test]
    fn ratio_counts() {
        let r = SplitRatios::default();
        assert_eq!(r.counts(10), (8, 1, 1));
        assert_eq!(r.counts(1), (1, 0, 0));
        assert_eq!(r.counts(2), (2, 0, 0));
        assert_eq!(r.counts(30), (24, 3, 3));
        assert_eq!(r.counts(19), (17, 1, 1));
    }

    #[test]
    fn split_rejects_bad_ratios() {
        let ds = InteractionDataset::from_pairs(1, 1, [(0, 0)]).unwrap();
        let bad = SplitRatios {
            train: 0.5,
            validation: 0.1,
            test: 0.1,
        };
        assert!(split_per_user(&ds, bad, 0).is_err());
    }

    #[test]
    fn single_interaction_user_keeps_it_in_train() {
        let ds = InteractionDataset::from_pairs(1, 1, [(0, 0)]).unwrap();
        let s = split_per_user(&ds, SplitRatios::default(), 3).unwrap();
        assert_eq!(s.train.pairs, vec![(0, 0)]);
        assert!(s.validation.is_empty() && s.test.is_empty());
    }

    #[test]
    fn ten_interactions_split_eight_one_one() {
        let ds = InteractionDataset::from_pairs(1, 10, (0..10).map(|i| (0, i))).unwrap();
        let s = split_per_user(&ds, SplitRatios::default(), 11).unwrap();
        assert_eq!((s.train.n_interactions(), s.validation.len(), s.test.len()), (8, 1, 1));
    }

    #[test]
    fn manifest_missing_header_is_rejected() {
        let r = SplitDataset::parse_manifest("0 0 train\n", Path::new("m"));
        assert!(r.is_err());
    }
}
