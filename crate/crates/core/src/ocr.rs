//! OCR handwriting data: loader for the tab-separated character file
//! (`id, letter, next_id, word_id, position, fold, 128 pixels`) and a
//! synthetic generator writing the same format.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::ckn::{FeatureMap, KernelConfig, LayerSpec};
use crate::error::{Error, Result};
use crate::graph::{chain_model, primal_objective, Example};
use crate::inference::max_product_chain;
use crate::optim::{MarginalOracle, SdcaConfig, SdcaState, TrainLog, TrainLogRow};
use crate::rng::{child_rng, child_seed};
use crate::trainer::{CknConfig, NodeInput, OptimizerConfig, ScalerKind, StructExample, Template, TrainConfig};

pub const OCR_HEIGHT: usize = 16;
pub const OCR_WIDTH: usize = 8;
pub const OCR_PIXELS: usize = OCR_HEIGHT * OCR_WIDTH;
pub const OCR_LABELS: usize = 26;
/// Word and character counts of the canonical public file.
pub const CANONICAL_WORDS: usize = 6877;
pub const CANONICAL_CHARS: usize = 52152;

#[derive(Clone, Debug, PartialEq)]
pub struct OcrWord {
    pub word_id: usize,
    pub fold: usize,
    /// Labels in `0..26`.
    pub letters: Vec<usize>,
    /// Row-major 16x8 binary images.
    pub images: Vec<Vec<u8>>,
}

impl OcrWord {
    pub fn text(&self) -> String {
        self.letters.iter().map(|&l| (b'a' + l as u8) as char).collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct OcrDataset {
    pub words: Vec<OcrWord>,
}

struct Row {
    id: i64,
    letter: usize,
    next_id: i64,
    word_id: usize,
    position: usize,
    fold: usize,
    pixels: Vec<u8>,
}

fn parse_row(line: &str, lineno: usize) -> Result<Row> {
    let err = |msg: String| Error::Parse { line: lineno, msg };
    let fields: Vec<&str> = line.split('\t').map(str::trim).filter(|f| !f.is_empty()).collect();
    if fields.len() != 6 + OCR_PIXELS {
        return Err(err(format!("expected {} fields, found {}", 6 + OCR_PIXELS, fields.len())));
    }
    let int = |k: usize, name: &str| -> Result<i64> {
        fields[k].parse::<i64>().map_err(|_| err(format!("bad {name} '{}'", fields[k])))
    };
    let letter = fields[1].as_bytes();
    if letter.len() != 1 || !letter[0].is_ascii_lowercase() {
        return Err(err(format!("bad letter '{}'", fields[1])));
    }
    let nonneg = |v: i64, name: &str| -> Result<usize> {
        usize::try_from(v).map_err(|_| err(format!("negative {name}")))
    };
    let mut pixels = Vec::with_capacity(OCR_PIXELS);
    for f in &fields[6..] {
        match *f {
            "0" => pixels.push(0),
            "1" => pixels.push(1),
            other => return Err(err(format!("pixel value '{other}' is not 0 or 1"))),
        }
    }
    Ok(Row {
        id: int(0, "id")?,
        letter: (letter[0] - b'a') as usize,
        next_id: int(2, "next_id")?,
        word_id: nonneg(int(3, "word_id")?, "word_id")?,
        position: nonneg(int(4, "position")?, "position")?,
        fold: nonneg(int(5, "fold")?, "fold")?,
        pixels,
    })
}

/// Parse the character file and reassemble words along `next_id` links.
pub fn parse_ocr(text: &str) -> Result<OcrDataset> {
    let mut by_word: BTreeMap<usize, Vec<Row>> = BTreeMap::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = parse_row(line, k + 1)?;
        by_word.entry(row.word_id).or_default().push(row);
    }
    let mut words = Vec::with_capacity(by_word.len());
    for (word_id, mut rows) in by_word {
        rows.sort_by_key(|r| r.position);
        for (k, r) in rows.iter().enumerate() {
            let expect = rows.get(k + 1).map_or(-1, |n| n.id);
            if r.next_id != expect {
                return Err(Error::Integrity(format!(
                    "word {word_id}: character {} links to {} but the next character is {}",
                    r.id, r.next_id, expect
                )));
            }
            if r.fold != rows[0].fold {
                return Err(Error::Integrity(format!("word {word_id} spans several folds")));
            }
        }
        words.push(OcrWord {
            word_id,
            fold: rows[0].fold,
            letters: rows.iter().map(|r| r.letter).collect(),
            images: rows.into_iter().map(|r| r.pixels).collect(),
        });
    }
    Ok(OcrDataset { words })
}

pub fn load_ocr(path: impl AsRef<Path>) -> Result<OcrDataset> {
    parse_ocr(&std::fs::read_to_string(path)?)
}

impl OcrDataset {
    pub fn n_chars(&self) -> usize {
        self.words.iter().map(|w| w.letters.len()).sum()
    }

    pub fn is_canonical(&self) -> bool {
        self.words.len() == CANONICAL_WORDS && self.n_chars() == CANONICAL_CHARS
    }

    /// `(train, test)` with `test_fold` held out.
    pub fn split(&self, test_fold: usize) -> (Vec<OcrWord>, Vec<OcrWord>) {
        self.words.iter().cloned().partition(|w| w.fold != test_fold)
    }

    /// Serialize in the loader's format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut id = 1i64;
        for w in &self.words {
            for (k, (l, img)) in w.letters.iter().zip(&w.images).enumerate() {
                let next = if k + 1 < w.letters.len() { id + 1 } else { -1 };
                let _ = write!(out, "{id}\t{}\t{next}\t{}\t{}\t{}", (b'a' + *l as u8) as char, w.word_id, k + 1, w.fold);
                for p in img {
                    let _ = write!(out, "\t{p}");
                }
                out.push('\n');
                id += 1;
            }
        }
        out
    }
}

/// Chain CRFs on raw pixels plus a constant feature.
pub fn linear_examples(words: &[OcrWord]) -> Vec<Example> {
    words
        .iter()
        .map(|w| {
            let phis: Vec<Vec<f64>> = w
                .images
                .iter()
                .map(|img| img.iter().map(|&p| p as f64).chain(std::iter::once(1.0)).collect())
                .collect();
            Example { model: chain_model(&phis, OCR_LABELS), label: w.letters.clone() }
        })
        .collect()
}

/// Chain examples whose nodes are 16x8 single-channel images.
pub fn struct_examples(words: &[OcrWord]) -> Vec<StructExample> {
    words
        .iter()
        .map(|w| StructExample {
            inputs: w
                .images
                .iter()
                .map(|img| {
                    let data = img.iter().map(|&p| p as f64).collect();
                    NodeInput::Map(FeatureMap::new(OCR_HEIGHT, OCR_WIDTH, 1, data).expect("16x8 image"))
                })
                .collect(),
            template: Template::chain(w.letters.len(), OCR_LABELS),
            label: w.letters.clone(),
            aux: None,
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinearConfig {
    pub lambda: Option<f64>,
    pub epochs: usize,
    /// Stop once the duality gap drops below this value.
    pub gap_tol: f64,
    pub uniform_fraction: f64,
    pub seed: u64,
}

impl Default for LinearConfig {
    fn default() -> Self {
        Self { lambda: None, epochs: 50, gap_tol: 1e-5, uniform_fraction: 0.8, seed: 0 }
    }
}

/// Chain CRF weights over raw pixels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearChainModel {
    pub weights: Vec<f64>,
    pub lambda: f64,
}

impl LinearChainModel {
    pub fn predict(&self, word: &OcrWord) -> Result<Vec<usize>> {
        let ex = &linear_examples(std::slice::from_ref(word))[0];
        Ok(max_product_chain(&ex.model.potentials(&self.weights))?.1)
    }

    /// Character error rate.
    pub fn error_rate(&self, words: &[OcrWord]) -> Result<f64> {
        let (mut wrong, mut total) = (0, 0);
        for w in words {
            let y = self.predict(w)?;
            wrong += y.iter().zip(&w.letters).filter(|(a, b)| a != b).count();
            total += y.len();
        }
        Ok(if total == 0 { 0.0 } else { wrong as f64 / total as f64 })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// SDCA on linear-feature chain CRFs, logging one row per epoch. The test
/// error column is NaN when `test` is empty.
pub fn train_linear(
    train: &[OcrWord],
    test: &[OcrWord],
    cfg: &LinearConfig,
    mut log: Option<&mut TrainLog>,
) -> Result<(LinearChainModel, Vec<TrainLogRow>)> {
    let start = std::time::Instant::now();
    let data = linear_examples(train);
    let sdca_cfg = SdcaConfig {
        lambda: cfg.lambda,
        seed: child_seed(cfg.seed, "sdca"),
        uniform_fraction: cfg.uniform_fraction,
        ..SdcaConfig::default()
    };
    let mut state = SdcaState::init(&data, &sdca_cfg)?;
    let oracle = MarginalOracle::default();
    let mut rows = Vec::new();
    for epoch in 1..=cfg.epochs {
        state.epoch(&data, &oracle)?;
        let gap = state.duality_gap(&data, &oracle)?;
        let dual = state.dual_objective()?;
        let model = LinearChainModel { weights: state.w.clone(), lambda: state.lambda };
        let row = TrainLogRow {
            epoch,
            step: state.step_count,
            primal: primal_objective(&state.w, &data, state.lambda)?,
            dual,
            gap,
            test_error: if test.is_empty() { f64::NAN } else { model.error_rate(test)? },
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        log::info!("epoch {epoch} gap {gap:.3e} test_error {:.4}", row.test_error);
        if let Some(l) = log.as_deref_mut() {
            l.write(&row)?;
        }
        rows.push(row);
        if gap < cfg.gap_tol {
            break;
        }
    }
    Ok((LinearChainModel { weights: state.w, lambda: state.lambda }, rows))
}

/// One-layer Struct-CKN on the 16x8 images: `filters` maps over 5x5
/// patches, pooled and subsampled by 2.
pub fn ckn_config(filters: usize, outer_iters: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        ckn: CknConfig {
            layers: vec![LayerSpec {
                patch_h: 5,
                patch_w: 5,
                filters,
                pool_beta: 1.0,
                subsample: 2,
                kernel: KernelConfig { alpha: 2.0, eigen_floor: 1e-6 },
            }],
            patches_per_image: 10,
            kmeans_iters: 10,
            init_maps: 5000,
            inv_sqrt_mode: Default::default(),
        },
        optimizer: OptimizerConfig { n_ep: 3, outer_iters, batch_size: Some(256), ..OptimizerConfig::default() },
        scaler: ScalerKind::AverageUnitNorm,
        embedding: None,
        task: serde_json::Value::Null,
        seed,
    }
}

const GLYPHS: [[&str; 7]; 26] = [
    [".....", ".....", ".###.", "....#", ".####", "#...#", ".####"],
    ["#....", "#....", "####.", "#...#", "#...#", "#...#", "####."],
    [".....", ".....", ".###.", "#....", "#....", "#...#", ".###."],
    ["....#", "....#", ".####", "#...#", "#...#", "#...#", ".####"],
    [".....", ".....", ".###.", "#...#", "#####", "#....", ".###."],
    ["..##.", ".#..#", ".#...", "###..", ".#...", ".#...", ".#..."],
    [".....", ".####", "#...#", "#...#", ".####", "....#", ".###."],
    ["#....", "#....", "#.##.", "##..#", "#...#", "#...#", "#...#"],
    ["..#..", ".....", ".##..", "..#..", "..#..", "..#..", ".###."],
    ["...#.", ".....", "..##.", "...#.", "...#.", "#..#.", ".##.."],
    ["#....", "#....", "#..#.", "#.#..", "##...", "#.#..", "#..#."],
    [".##..", "..#..", "..#..", "..#..", "..#..", "..#..", ".###."],
    [".....", ".....", "##.#.", "#.#.#", "#.#.#", "#...#", "#...#"],
    [".....", ".....", "#.##.", "##..#", "#...#", "#...#", "#...#"],
    [".....", ".....", ".###.", "#...#", "#...#", "#...#", ".###."],
    [".....", "####.", "#...#", "#...#", "####.", "#....", "#...."],
    [".....", ".####", "#...#", "#...#", ".####", "....#", "....#"],
    [".....", ".....", "#.##.", "##..#", "#....", "#....", "#...."],
    [".....", ".....", ".####", "#....", ".###.", "....#", "####."],
    [".#...", ".#...", "###..", ".#...", ".#...", ".#..#", "..##."],
    [".....", ".....", "#...#", "#...#", "#...#", "#..##", ".##.#"],
    [".....", ".....", "#...#", "#...#", "#...#", ".#.#.", "..#.."],
    [".....", ".....", "#...#", "#...#", "#.#.#", "#.#.#", ".#.#."],
    [".....", ".....", "#...#", ".#.#.", "..#..", ".#.#.", "#...#"],
    [".....", "#...#", "#...#", "#...#", ".####", "....#", ".###."],
    [".....", ".....", "#####", "...#.", "..#..", ".#...", "#####"],
];

const WORDS: &str = "about above across action after again against along already also always among \
    another answer around away back became because become been before began behind being below \
    between both brought building called came cannot carried certain change children city close \
    come common complete could country course cried dark days different direction does done \
    door down during each early earth either enough even ever every example face family father \
    feet field find fire first following food form found four friend from front gave given going \
    good government great ground group half hand hard having head heard help here high himself \
    house however hundred idea important inside interest just keep kind knew know land large last \
    later learn least leave left less letter life light line little living long looked making \
    matter means might miles mind moment money more morning most mother much music must name \
    nation near never next night nothing notice number often once only open order other others \
    over paper part people perhaps person picture piece place plant play point position power \
    present problem produce question quite rather read ready really reason remember rest right \
    river road room round said same school second seemed seen sentence several shall short should \
    show side since small something sometimes song soon sound space special stand started state \
    still stood story street strong study such sure surface system table taken talk tell than \
    that their them themselves there these thing think third this those though thought three \
    through time together told took toward town tree true turned under until upon usually very \
    voice walk want watch water were western what when where whether which while white whole \
    wind with within without woman women words work world would write years young";

fn render(letter: usize, rng: &mut crate::rng::Rng) -> Vec<u8> {
    let glyph = &GLYPHS[letter];
    let h = rng.gen_range(11..=15usize);
    let w = rng.gen_range(5..=8usize);
    let top = rng.gen_range(0..=OCR_HEIGHT - h);
    let left = rng.gen_range(0..=OCR_WIDTH - w);
    let slant: f64 = rng.gen_range(-0.15..0.15);
    let thick = rng.gen_bool(0.3);
    let mut img = vec![0u8; OCR_PIXELS];
    for r in 0..h {
        for c in 0..w {
            let gr = r * 7 / h;
            let shift = (slant * (h as f64 / 2.0 - r as f64)).round() as isize;
            let gc = (c as isize - shift) * 5 / w as isize;
            if !(0..5).contains(&gc) {
                continue;
            }
            if glyph[gr].as_bytes()[gc as usize] == b'#' {
                img[(top + r) * OCR_WIDTH + left + c] = 1;
                if thick && left + c + 1 < OCR_WIDTH {
                    img[(top + r) * OCR_WIDTH + left + c + 1] = 1;
                }
            }
        }
    }
    for p in img.iter_mut() {
        if rng.gen_bool(0.04) {
            *p ^= 1;
        }
    }
    img
}

/// Synthetic stand-in for the OCR benchmark: words drawn from a fixed list
/// with the first letter dropped, rendered from a 5x7 bitmap font with random
/// scale, offset, slant, stroke width and pixel noise; folds assigned
/// round-robin over 10.
pub fn synthetic_ocr(n_words: usize, seed: u64) -> OcrDataset {
    let mut rng = child_rng(seed, "synthetic-ocr");
    let vocab: Vec<&str> = WORDS.split_whitespace().collect();
    let words = (0..n_words)
        .map(|k| {
            let word = vocab.choose(&mut rng).expect("non-empty word list");
            let letters: Vec<usize> = word.bytes().skip(1).map(|b| (b - b'a') as usize).collect();
            let images = letters.iter().map(|&l| render(l, &mut rng)).collect();
            OcrWord { word_id: k + 1, fold: k % 10, letters, images }
        })
        .collect();
    OcrDataset { words }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(id: i64, letter: char, next: i64, word: usize, pos: usize, fold: usize, px: &str) -> String {
        let mut s = format!("{id}\t{letter}\t{next}\t{word}\t{pos}\t{fold}");
        for _ in 0..OCR_PIXELS {
            s.push('\t');
            s.push_str(px);
        }
        s
    }

    #[test]
    fn two_character_word() {
        let text = [line(1, 'o', 2, 1, 1, 0, "0"), line(2, 'k', -1, 1, 2, 0, "1")].join("\n");
        let d = parse_ocr(&text).unwrap();
        assert_eq!(d.words.len(), 1);
        assert_eq!(d.words[0].text(), "ok");
        assert_eq!(d.words[0].images[1][5], 1);
    }

    #[test]
    fn bad_pixel_is_parse_error_with_line() {
        let text = [line(1, 'o', 2, 1, 1, 0, "0"), line(2, 'k', -1, 1, 2, 0, "2")].join("\n");
        assert!(matches!(parse_ocr(&text), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn broken_chain_is_integrity_error() {
        let text = [line(1, 'o', 7, 1, 1, 0, "0"), line(2, 'k', -1, 1, 2, 0, "1")].join("\n");
        assert!(matches!(parse_ocr(&text), Err(Error::Integrity(_))));
    }

    #[test]
    fn synthetic_round_trips_through_loader() {
        let d = synthetic_ocr(30, 5);
        let back = parse_ocr(&d.to_text()).unwrap();
        assert_eq!(d, back);
        let (train, test) = d.split(0);
        assert_eq!(test.len(), 3);
        assert_eq!(train.len(), 27);
        assert!(d.words.iter().all(|w| w.images.iter().all(|i| i.len() == OCR_PIXELS)));
    }

    #[test]
    fn linear_sdca_learns_synthetic_letters() {
        let d = synthetic_ocr(60, 1);
        let (train, test) = d.split(0);
        let cfg = LinearConfig { epochs: 15, ..LinearConfig::default() };
        let (model, rows) = train_linear(&train, &test, &cfg, None).unwrap();
        assert!(rows.windows(2).all(|w| w[1].dual >= w[0].dual - 1e-9));
        assert!(rows.iter().all(|r| r.gap >= -1e-9 && r.primal >= r.dual - 1e-9));
        assert!(model.error_rate(&train).unwrap() < 0.2);
        let back = LinearChainModel::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn synthetic_is_deterministic() {
        assert_eq!(synthetic_ocr(5, 9), synthetic_ocr(5, 9));
        assert_ne!(synthetic_ocr(5, 9), synthetic_ocr(5, 10));
    }
}
