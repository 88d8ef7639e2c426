//! Verification and identification metrics over shifted-matching distances.
//!
//! Every probe image is compared against every class: the class score is
//! the minimum (or mean) distance to that class's samples, leaving the probe
//! itself out of its own class. Lower scores mean "more genuine".

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::map::{FeatureMap, ShiftWindow};
use crate::matching::match_score;
use crate::nn::NetworkParameters;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Min,
    Mean,
}

/// The `[eval]` section of experiment configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Protocol {
    pub window: ShiftWindow,
    pub aggregation: Aggregation,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            window: ShiftWindow::new(5, 5),
            aggregation: Aggregation::Min,
        }
    }
}

/// Embedded images with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMaps<T> {
    pub maps: Vec<FeatureMap<T>>,
    pub classes: Vec<usize>,
    pub ids: Vec<String>,
    pub class_names: Vec<String>,
}

impl<T: Scalar> LabeledMaps<T> {
    pub fn embed(params: &NetworkParameters<T>, ds: &LabeledDataset) -> Result<Self> {
        let maps = ds
            .images
            .par_iter()
            .map(|img| params.forward(&img.image))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            maps,
            classes: ds.images.iter().map(|i| i.class).collect(),
            ids: (0..ds.len()).map(|i| ds.image_id(i)).collect(),
            class_names: ds.class_names.clone(),
        })
    }
}

/// Probe-by-class distance table.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub probe_ids: Vec<String>,
    pub probe_classes: Vec<usize>,
    pub class_names: Vec<String>,
    /// Row-major `probes x classes`.
    pub distances: Vec<f64>,
}

/// Genuine and imposter distances.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreSet {
    pub genuine: Vec<f64>,
    pub imposter: Vec<f64>,
}

impl ScoreSet {
    pub fn counts(&self) -> (usize, usize) {
        (self.genuine.len(), self.imposter.len())
    }
}

impl ScoreMatrix {
    pub fn probe_count(&self) -> usize {
        self.probe_ids.len()
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn row(&self, probe: usize) -> &[f64] {
        let k = self.class_count();
        &self.distances[probe * k..(probe + 1) * k]
    }

    pub fn score_set(&self) -> ScoreSet {
        let mut set = ScoreSet::default();
        for p in 0..self.probe_count() {
            for (c, &d) in self.row(p).iter().enumerate() {
                if c == self.probe_classes[p] {
                    set.genuine.push(d);
                } else {
                    set.imposter.push(d);
                }
            }
        }
        set
    }

    /// Genuine and imposter totals the layout must produce.
    pub fn expected_counts(&self) -> (usize, usize) {
        expected_counts(self.probe_count(), self.class_count())
    }

    /// Checks the table against the closed-form counts.
    pub fn audit(&self) -> Result<()> {
        let (g, i) = self.expected_counts();
        let got = self.score_set().counts();
        if got != (g, i) {
            return Err(Error::ProtocolViolation(format!(
                "expected {g} genuine / {i} imposter scores, found {} / {}",
                got.0, got.1
            )));
        }
        Ok(())
    }
}

/// One genuine score per probe and one imposter score per other class.
pub fn expected_counts(probes: usize, classes: usize) -> (usize, usize) {
    (probes, probes * classes.saturating_sub(1))
}

fn class_members(classes: &[usize], class_count: usize) -> Result<Vec<Vec<usize>>> {
    let mut members = vec![Vec::new(); class_count];
    for (i, &c) in classes.iter().enumerate() {
        members
            .get_mut(c)
            .ok_or_else(|| Error::ProtocolViolation(format!("class index {c} out of range")))?
            .push(i);
    }
    if class_count < 2 {
        return Err(Error::ProtocolViolation(format!("need at least 2 classes, found {class_count}")));
    }
    if let Some(c) = members.iter().position(|m| m.len() < 2) {
        return Err(Error::ProtocolViolation(format!(
            "class {c} has {} sample(s); every class needs at least 2",
            members[c].len()
        )));
    }
    Ok(members)
}

/// Scores every probe against every class under `proto`.
pub fn generate_scores<T: Scalar>(maps: &LabeledMaps<T>, proto: &Protocol) -> Result<ScoreMatrix> {
    if maps.maps.len() != maps.classes.len() || maps.maps.len() != maps.ids.len() {
        return Err(Error::DimensionMismatch("maps, classes and ids differ in length".into()));
    }
    let k = maps.class_names.len();
    let members = class_members(&maps.classes, k)?;
    let rows = (0..maps.maps.len())
        .into_par_iter()
        .map(|p| {
            let probe = &maps.maps[p];
            members
                .iter()
                .map(|group| {
                    let (mut acc, mut n) = (match proto.aggregation {
                        Aggregation::Min => f64::INFINITY,
                        Aggregation::Mean => 0.0,
                    }, 0usize);
                    for &g in group.iter().filter(|&&g| g != p) {
                        let d = match_score(probe, &maps.maps[g], proto.window)?;
                        match proto.aggregation {
                            Aggregation::Min => acc = acc.min(d),
                            Aggregation::Mean => acc += d,
                        }
                        n += 1;
                    }
                    Ok(match proto.aggregation {
                        Aggregation::Min => acc,
                        Aggregation::Mean => acc / n as f64,
                    })
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let matrix = ScoreMatrix {
        probe_ids: maps.ids.clone(),
        probe_classes: maps.classes.clone(),
        class_names: maps.class_names.clone(),
        distances: rows.into_iter().flatten().collect(),
    };
    matrix.audit()?;
    Ok(matrix)
}

/// Sorted distinct thresholds with FAR (imposter <= t) and FRR (genuine > t).
fn sweep(set: &ScoreSet) -> Result<Vec<(f64, f64, f64)>> {
    if set.genuine.is_empty() {
        return Err(Error::EmptyScores("genuine"));
    }
    if set.imposter.is_empty() {
        return Err(Error::EmptyScores("imposter"));
    }
    if set.genuine.iter().chain(&set.imposter).any(|s| s.is_nan()) {
        return Err(Error::NonFinite(0));
    }
    let mut gen = set.genuine.clone();
    let mut imp = set.imposter.clone();
    gen.sort_by(f64::total_cmp);
    imp.sort_by(f64::total_cmp);
    let mut thresholds: Vec<f64> = gen.iter().chain(&imp).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let (ng, ni) = (gen.len() as f64, imp.len() as f64);
    let (mut gi, mut ii) = (0, 0);
    let mut out = Vec::with_capacity(thresholds.len() + 1);
    out.push((f64::NEG_INFINITY, 0.0, 1.0));
    for t in thresholds {
        while gi < gen.len() && gen[gi] <= t {
            gi += 1;
        }
        while ii < imp.len() && imp[ii] <= t {
            ii += 1;
        }
        out.push((t, ii as f64 / ni, (gen.len() - gi) as f64 / ng));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eer {
    pub eer: f64,
    /// Interpolated operating threshold.
    pub threshold: f64,
}

/// Equal error rate, linearly interpolated where FAR crosses FRR.
pub fn compute_eer(set: &ScoreSet) -> Result<Eer> {
    let points = sweep(set)?;
    let k = points
        .iter()
        .position(|&(_, far, frr)| far >= frr)
        .expect("the last threshold has FRR = 0");
    let (t1, far1, frr1) = points[k];
    if k == 0 || far1 == frr1 {
        return Ok(Eer { eer: far1, threshold: t1 });
    }
    let (t0, far0, frr0) = points[k - 1];
    let (d0, d1) = (far0 - frr0, far1 - frr1);
    let a = -d0 / (d1 - d0);
    let threshold = if t0.is_finite() { t0 + a * (t1 - t0) } else { t1 };
    Ok(Eer {
        eer: far0 + a * (far1 - far0),
        threshold,
    })
}

/// `(FAR, GAR)` at every distinct threshold, from `(0, 0)` up to `(1, 1)`.
pub fn compute_roc(set: &ScoreSet) -> Result<Vec<(f64, f64)>> {
    Ok(sweep(set)?.into_iter().map(|(_, far, frr)| (far, 1.0 - frr)).collect())
}

/// Rank of the true class per probe (1-based); ties go to the lower class id.
pub fn probe_ranks(m: &ScoreMatrix) -> Vec<usize> {
    (0..m.probe_count())
        .map(|p| {
            let row = m.row(p);
            let truth = m.probe_classes[p];
            let d = row[truth];
            1 + row
                .iter()
                .enumerate()
                .filter(|&(c, &x)| c != truth && (x < d || (x == d && c < truth)))
                .count()
        })
        .collect()
}

/// Rank-k identification rates for k = 1..=classes.
pub fn compute_cmc(m: &ScoreMatrix) -> Vec<f64> {
    let ranks = probe_ranks(m);
    let n = ranks.len().max(1) as f64;
    let mut hist = vec![0usize; m.class_count()];
    for r in ranks {
        hist[r - 1] += 1;
    }
    hist.iter()
        .scan(0usize, |acc, &h| {
            *acc += h;
            Some(*acc as f64 / n)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub roc: Vec<(f64, f64)>,
    pub eer: Eer,
    pub cmc: Vec<f64>,
    pub genuine_count: usize,
    pub imposter_count: usize,
}

impl EvalReport {
    pub fn rank_one(&self) -> f64 {
        self.cmc.first().copied().unwrap_or(0.0)
    }

    pub fn summary(&self) -> String {
        format!(
            "eer {:.4}\nthreshold {}\nrank1 {:.4}\ngenuine {}\nimposter {}\n",
            self.eer.eer,
            self.eer.threshold,
            self.rank_one(),
            self.genuine_count,
            self.imposter_count
        )
    }

    pub fn write_roc_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["far", "gar"])?;
        for (far, gar) in &self.roc {
            w.write_record([far.to_string(), gar.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Whitespace-separated ROC and CMC blocks, `#`-commented headers.
    pub fn write_gnuplot(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "# roc: far gar")?;
        for (far, gar) in &self.roc {
            writeln!(out, "{far} {gar}")?;
        }
        writeln!(out, "\n\n# cmc: rank accuracy")?;
        for (k, a) in self.cmc.iter().enumerate() {
            writeln!(out, "{} {a}", k + 1)?;
        }
        Ok(())
    }
}

pub fn evaluate(m: &ScoreMatrix) -> Result<EvalReport> {
    let set = m.score_set();
    Ok(EvalReport {
        roc: compute_roc(&set)?,
        eer: compute_eer(&set)?,
        cmc: compute_cmc(m),
        genuine_count: set.genuine.len(),
        imposter_count: set.imposter.len(),
    })
}

/// `probe_id,target_class,score,label` rows, one per (probe, class).
pub fn write_scores_csv(m: &ScoreMatrix, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["probe_id", "target_class", "score", "label"])?;
    for p in 0..m.probe_count() {
        for (c, d) in m.row(p).iter().enumerate() {
            let label = if c == m.probe_classes[p] { "genuine" } else { "imposter" };
            w.write_record([m.probe_ids[p].as_str(), m.class_names[c].as_str(), &d.to_string(), label])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct ScoreRow {
    probe_id: String,
    target_class: String,
    score: f64,
    label: String,
}

/// Rebuilds the probe-by-class table from a score file.
pub fn read_scores_csv(input: impl Read) -> Result<ScoreMatrix> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["probe_id", "target_class", "score", "label"] {
        return Err(Error::Csv(format!("unexpected score header {:?}", headers)));
    }
    let mut probes: Vec<String> = Vec::new();
    let mut probe_index = BTreeMap::new();
    let mut classes: Vec<String> = Vec::new();
    let mut class_index = BTreeMap::new();
    let mut cells = BTreeMap::new();
    let mut genuine_of: BTreeMap<usize, usize> = BTreeMap::new();
    for row in rdr.deserialize() {
        let row: ScoreRow = row?;
        let p = *probe_index.entry(row.probe_id.clone()).or_insert_with(|| {
            probes.push(row.probe_id.clone());
            probes.len() - 1
        });
        let c = *class_index.entry(row.target_class.clone()).or_insert_with(|| {
            classes.push(row.target_class.clone());
            classes.len() - 1
        });
        match row.label.as_str() {
            "genuine" => {
                if genuine_of.insert(p, c).is_some() {
                    return Err(Error::ProtocolViolation(format!("probe {} has two genuine scores", row.probe_id)));
                }
            }
            "imposter" => {}
            other => return Err(Error::Csv(format!("unknown label {other:?}"))),
        }
        if !row.score.is_finite() {
            return Err(Error::NonFinite(cells.len()));
        }
        if cells.insert((p, c), row.score).is_some() {
            return Err(Error::ProtocolViolation(format!(
                "duplicate score for {} vs {}",
                row.probe_id, row.target_class
            )));
        }
    }
    let k = classes.len();
    if cells.len() != probes.len() * k {
        return Err(Error::ProtocolViolation(format!(
            "{} scores for {} probes x {k} classes",
            cells.len(),
            probes.len()
        )));
    }
    let probe_classes = (0..probes.len())
        .map(|p| {
            genuine_of
                .get(&p)
                .copied()
                .ok_or_else(|| Error::ProtocolViolation(format!("probe {} has no genuine score", probes[p])))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoreMatrix {
        probe_ids: probes,
        probe_classes,
        class_names: classes,
        distances: cells.into_values().collect(),
    })
}

pub fn save_scores_csv(m: &ScoreMatrix, path: &Path) -> Result<()> {
    write_scores_csv(m, std::io::BufWriter::new(std::fs::File::create(path)?))
}

pub fn load_scores_csv(path: &Path) -> Result<ScoreMatrix> {
    read_scores_csv(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const POINT: Protocol = Protocol {
        window: ShiftWindow::NONE,
        aggregation: Aggregation::Min,
    };

    fn set(g: &[f64], i: &[f64]) -> ScoreSet {
        ScoreSet {
            genuine: g.to_vec(),
            imposter: i.to_vec(),
        }
    }

    fn point_maps(values: &[(usize, f64)], classes: usize) -> LabeledMaps<f64> {
        LabeledMaps {
            maps: values.iter().map(|&(_, v)| FeatureMap::new(1, 1, vec![v]).unwrap()).collect(),
            classes: values.iter().map(|&(c, _)| c).collect(),
            ids: (0..values.len()).map(|i| format!("p{i}")).collect(),
            class_names: (0..classes).map(|c| format!("c{c}")).collect(),
        }
    }

    // Brute force: FAR/FRR at each candidate threshold by direct counting.
    fn brute_points(s: &ScoreSet) -> Vec<(f64, f64)> {
        let mut ts: Vec<f64> = s.genuine.iter().chain(&s.imposter).copied().collect();
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        let mut out = vec![(0.0, 0.0)];
        for t in ts {
            let far = s.imposter.iter().filter(|&&x| x <= t).count() as f64 / s.imposter.len() as f64;
            let frr = s.genuine.iter().filter(|&&x| x > t).count() as f64 / s.genuine.len() as f64;
            out.push((far, 1.0 - frr));
        }
        out
    }

    #[test]
    fn eer_hand_values() {
        assert!((compute_eer(&set(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0])).unwrap().eer - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(compute_eer(&set(&[1.0, 2.0], &[3.0, 4.0])).unwrap().eer, 0.0);
        assert_eq!(compute_eer(&set(&[1.0, 2.0, 5.0], &[1.0, 2.0, 5.0])).unwrap().eer, 0.5);
    }

    #[test]
    fn eer_interpolates_crossing() {
        // t=1: FAR 0, FRR 1/2; t=2: FAR 1, FRR 1/2; FAR - FRR crosses zero halfway.
        let e = compute_eer(&set(&[1.0, 3.0], &[2.0])).unwrap();
        assert!((e.eer - 0.5).abs() < 1e-15);
        assert!((e.threshold - 1.5).abs() < 1e-12);
    }

    #[test]
    fn empty_scores_rejected() {
        assert!(matches!(compute_eer(&set(&[], &[1.0])), Err(Error::EmptyScores("genuine"))));
        assert!(matches!(compute_roc(&set(&[1.0], &[])), Err(Error::EmptyScores("imposter"))));
    }

    #[test]
    fn roc_shapes() {
        let sep = compute_roc(&set(&[1.0, 2.0], &[3.0, 4.0])).unwrap();
        assert!(sep.contains(&(0.0, 1.0)));
        assert_eq!(sep.last(), Some(&(1.0, 1.0)));
        let same = compute_roc(&set(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0])).unwrap();
        assert!(same.iter().all(|(f, g)| (f - g).abs() < 1e-15));
        let hand = set(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]);
        assert_eq!(compute_roc(&hand).unwrap(), brute_points(&hand));
    }

    #[test]
    fn two_by_two_counts() {
        let maps = point_maps(&[(0, 0.0), (0, 0.1), (1, 1.0), (1, 1.2)], 2);
        let m = generate_scores(&maps, &POINT).unwrap();
        assert_eq!(m.score_set().counts(), (4, 4));
        // probe 0: own class leaves only probe 1.
        assert!((m.row(0)[0] - 0.01).abs() < 1e-15);
        assert!((m.row(0)[1] - 1.0).abs() < 1e-15);
        assert_eq!(compute_cmc(&m), vec![1.0, 1.0]);
    }

    #[test]
    fn mean_aggregation() {
        let maps = point_maps(&[(0, 0.0), (0, 1.0), (0, 2.0), (1, 4.0), (1, 6.0)], 2);
        let proto = Protocol {
            aggregation: Aggregation::Mean,
            ..POINT
        };
        let m = generate_scores(&maps, &proto).unwrap();
        assert_eq!(m.row(0), &[(1.0 + 4.0) / 2.0, (16.0 + 36.0) / 2.0]);
    }

    #[test]
    fn singleton_class_is_a_violation() {
        let maps = point_maps(&[(0, 0.0), (0, 1.0), (1, 4.0)], 2);
        assert!(matches!(generate_scores(&maps, &POINT), Err(Error::ProtocolViolation(_))));
        let one = point_maps(&[(0, 0.0), (0, 1.0)], 1);
        assert!(matches!(generate_scores(&one, &POINT), Err(Error::ProtocolViolation(_))));
    }

    #[test]
    fn all_ties_rank_by_class_id() {
        let maps = point_maps(&[(0, 1.0), (0, 1.0), (1, 1.0), (1, 1.0), (2, 1.0), (2, 1.0)], 3);
        let m = generate_scores(&maps, &POINT).unwrap();
        assert_eq!(probe_ranks(&m), vec![1, 1, 2, 2, 3, 3]);
        let cmc = compute_cmc(&m);
        assert!((cmc[0] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(cmc[2], 1.0);
    }

    #[test]
    fn score_csv_round_trip() {
        let maps = point_maps(&[(0, 0.0), (0, 0.3), (1, 1.0), (1, 1.7), (2, -1.0), (2, -0.5)], 3);
        let m = generate_scores(&maps, &POINT).unwrap();
        let mut buf = Vec::new();
        write_scores_csv(&m, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("probe_id,target_class,score,label\np0,c0,"));
        assert_eq!(read_scores_csv(buf.as_slice()).unwrap(), m);
    }

    #[test]
    fn score_csv_rejects_incomplete_tables() {
        let text = "probe_id,target_class,score,label\na,x,0.1,genuine\na,y,0.5,imposter\nb,y,0.2,genuine\n";
        assert!(matches!(read_scores_csv(text.as_bytes()), Err(Error::ProtocolViolation(_))));
        let bad = "probe_id,target_class,score,label\na,x,0.1,match\n";
        assert!(matches!(read_scores_csv(bad.as_bytes()), Err(Error::Csv(_))));
    }

    #[test]
    fn report_summary() {
        let text = "probe_id,target_class,score,label\n\
                    a,x,1,genuine\na,y,2,imposter\n\
                    b,x,2,genuine\nb,y,3,imposter\n\
                    c,y,3,genuine\nc,x,4,imposter\n";
        let r = evaluate(&read_scores_csv(text.as_bytes()).unwrap()).unwrap();
        assert!(r.summary().starts_with("eer 0.3333\n"));
        let mut gp = Vec::new();
        r.write_gnuplot(&mut gp).unwrap();
        assert!(String::from_utf8(gp).unwrap().starts_with("# roc: far gar\n0 0\n"));
    }

    proptest! {
        #[test]
        fn count_law(k in 2usize..=20, s in 2usize..=6) {
            let values: Vec<(usize, f64)> = (0..k * s).map(|i| (i / s, (i * 7 % 13) as f64)).collect();
            let m = generate_scores(&point_maps(&values, k), &POINT).unwrap();
            prop_assert_eq!(m.score_set().counts(), (k * s, k * s * (k - 1)));
        }

        #[test]
        fn roc_and_eer_match_brute_force(
            g in prop::collection::vec(0u8..40, 1..60),
            i in prop::collection::vec(0u8..40, 1..60),
        ) {
            let s = set(&g.iter().map(|&v| v as f64).collect::<Vec<_>>(), &i.iter().map(|&v| v as f64).collect::<Vec<_>>());
            let roc = compute_roc(&s).unwrap();
            prop_assert_eq!(&roc, &brute_points(&s));
            prop_assert!(roc.windows(2).all(|w| w[1].0 >= w[0].0 && w[1].1 >= w[0].1));
            let e = compute_eer(&s).unwrap().eer;
            prop_assert!((0.0..=1.0).contains(&e));
            // The EER lies between FAR and FRR at the two thresholds bracketing the crossing.
            let pts: Vec<(f64, f64)> = roc.iter().map(|&(far, gar)| (far, 1.0 - gar)).collect();
            let k = pts.iter().position(|&(far, frr)| far >= frr).unwrap();
            let lo = if k == 0 { pts[0].0 } else { pts[k - 1].0.min(pts[k].1) };
            let hi = if k == 0 { pts[0].0 } else { pts[k - 1].1.max(pts[k].0) };
            prop_assert!(e >= lo - 1e-12 && e <= hi + 1e-12);
        }

        #[test]
        fn cmc_is_monotone_and_ends_at_one(vals in prop::collection::vec(0u8..5, 12)) {
            let values: Vec<(usize, f64)> = vals.iter().enumerate().map(|(i, &v)| (i / 3, v as f64)).collect();
            let m = generate_scores(&point_maps(&values, 4), &POINT).unwrap();
            let cmc = compute_cmc(&m);
            prop_assert!(cmc.windows(2).all(|w| w[1] >= w[0]));
            prop_assert_eq!(*cmc.last().unwrap(), 1.0);
            // Brute-force rank: sort classes by (distance, id).
            for p in 0..m.probe_count() {
                let mut order: Vec<usize> = (0..4).collect();
                order.sort_by(|&a, &b| m.row(p)[a].total_cmp(&m.row(p)[b]).then(a.cmp(&b)));
                let rank = 1 + order.iter().position(|&c| c == m.probe_classes[p]).unwrap();
                prop_assert_eq!(probe_ranks(&m)[p], rank);
            }
        }
    }
}
