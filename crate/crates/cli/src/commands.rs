use std::collections::BTreeSet;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use houghvote::bench::{self, BenchConfig};
use houghvote::tensorio::{DType, TensorData};
use houghvote::{
    attribute as attribute_votes, build_temporal_field, build_vote_field, class_interactions,
    decode_all, mask_regions, render_heatmap, vote_all_classes, vote_map, vote_scalable,
    vote_scatter, vote_spatiotemporal, AuxMaps, Detection, EvidenceStack, LabelMap, PresenceStack,
    ScalableMixWeights, Tensor, VoteField, VoteFieldSpec,
};
use ndarray::{Array3, Axis, Ix1, Ix2, Ix3, Ix4};
use serde_json::json;

use crate::{backend_of, BackendArg, BackendOpts, CliError};

type CmdResult = Result<(), CliError>;

const DUALITY_TOLERANCE: f64 = 1e-6;

fn load_field(path: &Path, rings: &[usize]) -> Result<VoteField, CliError> {
    let spec = VoteFieldSpec::from_json(&fs::read_to_string(path)?)?;
    let field = build_vote_field(&spec)?;
    if rings.is_empty() {
        Ok(field)
    } else {
        let keep: BTreeSet<usize> = rings.iter().copied().collect();
        Ok(mask_regions(&field, &keep)?)
    }
}

fn read(path: &Path) -> Result<Tensor, CliError> {
    Ok(houghvote::read_tensor(path)?)
}

fn write(tensor: &Tensor, path: &Path) -> CmdResult {
    Ok(houghvote::write_tensor(tensor, path)?)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(fs::File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

#[derive(Args, Debug)]
pub struct FieldArgs {
    /// JSON field spec, e.g. {"angle_bin_deg":90,"ring_diams":[2,8,16]}.
    spec: PathBuf,
    /// Keep only these rings (1 = center).
    #[arg(long, value_delimiter = ',')]
    rings: Vec<usize>,
    /// Write the side x side map of 1-based region ids here.
    #[arg(long)]
    region_map: Option<PathBuf>,
}

pub fn field(args: FieldArgs) -> CmdResult {
    let field = load_field(&args.spec, &args.rings)?;
    let mut out = output(None)?;
    writeln!(out, "R={} field={}", field.region_count(), field.side())?;
    writeln!(out, "region\tring\tsector\tK")?;
    for (r, region) in field.regions().iter().enumerate() {
        writeln!(
            out,
            "{}\t{}\t{}\t{}",
            r + 1,
            region.ring,
            region.sector,
            region.count()
        )?;
    }
    out.flush()?;
    if let Some(path) = args.region_map {
        let map = field.region_map().mapv(|id| id as f32);
        write(&Tensor::from_f32(map.view())?, &path)?;
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct VoteArgs {
    /// Evidence tensor, HxWxR or CxHxWxR.
    evidence: PathBuf,
    #[arg(long)]
    spec: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[command(flatten)]
    backend: BackendOpts,
    /// Keep only these rings (1 = center); evidence must carry only their regions.
    #[arg(long, value_delimiter = ',')]
    rings: Vec<usize>,
    /// Temporal evidence (HxWx4 or CxHxWx4) voted through the motion field and added.
    #[arg(long, conflicts_with = "mix_weights")]
    temporal: Option<PathBuf>,
    /// Scalable head: CxNx3x3 mixing weights applied to N shared evidence tensors.
    #[arg(long, requires = "mix_bias")]
    mix_weights: Option<PathBuf>,
    /// Scalable head: length-C bias.
    #[arg(long, requires = "mix_weights")]
    mix_bias: Option<PathBuf>,
}

fn evidence_stack(tensor: &Tensor) -> Result<(EvidenceStack, bool), CliError> {
    match tensor.shape().len() {
        3 => {
            let single = tensor.to_f32_fixed::<Ix3>()?.insert_axis(Axis(0));
            Ok((EvidenceStack::new(single)?, true))
        }
        4 => Ok((EvidenceStack::new(tensor.to_f32_fixed::<Ix4>()?)?, false)),
        n => Err(CliError::data(format!(
            "evidence must be HxWxR or CxHxWxR, got rank {n}"
        ))),
    }
}

pub fn vote(args: VoteArgs) -> CmdResult {
    let field = load_field(&args.spec, &args.rings)?;
    let backend = args.backend.backend();
    let (stack, single) = evidence_stack(&read(&args.evidence)?)?;

    let presence = if let (Some(w), Some(b)) = (&args.mix_weights, &args.mix_bias) {
        let mix = ScalableMixWeights::new(
            read(w)?.to_f32_fixed::<Ix4>()?,
            read(b)?.to_f32_fixed::<Ix1>()?,
        )?;
        vote_scalable(&stack, &field, &mix, backend)?
    } else if let Some(path) = &args.temporal {
        let (temporal, _) = evidence_stack(&read(path)?)?;
        if temporal.classes() != stack.classes() {
            return Err(CliError::data(format!(
                "{} temporal evidence tensors for {} classes",
                temporal.classes(),
                stack.classes()
            )));
        }
        let motion = build_temporal_field();
        let maps = (0..stack.classes())
            .map(|c| {
                vote_spatiotemporal(
                    &stack.class_tensor(c),
                    &temporal.class_tensor(c),
                    &field,
                    &motion,
                    backend,
                )
            })
            .collect::<houghvote::Result<Vec<_>>>()?;
        PresenceStack::from_maps(maps)?
    } else {
        vote_all_classes(&stack, &field, backend)?
    };

    let tensor = if single {
        Tensor::from_f32(presence.class(0))?
    } else {
        Tensor::from_f32(presence.view())?
    };
    write(&tensor, &args.output)
}

#[derive(Args, Debug)]
pub struct DecodeArgs {
    /// Presence maps, HxW or CxHxW.
    presence: PathBuf,
    /// HxWx2 height/width map in output-map pixels.
    #[arg(long)]
    wh: PathBuf,
    /// HxWx2 (dy, dx) center offsets.
    #[arg(long)]
    offset: PathBuf,
    #[arg(long, default_value_t = houghvote::decoder::DEFAULT_TOP_K)]
    top_k: usize,
    #[arg(long, default_value_t = houghvote::decoder::DEFAULT_STRIDE)]
    stride: u32,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    score_thresh: f32,
    /// Emit a COCO results array instead of JSON lines.
    #[arg(long)]
    coco: bool,
    #[arg(long, default_value_t = 0)]
    image_id: u64,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn presence_stack(tensor: &Tensor) -> Result<PresenceStack, CliError> {
    match tensor.shape().len() {
        2 => Ok(PresenceStack::new(
            tensor.to_f32_fixed::<Ix2>()?.insert_axis(Axis(0)),
        )?),
        3 => Ok(PresenceStack::new(tensor.to_f32_fixed::<Ix3>()?)?),
        n => Err(CliError::data(format!(
            "presence must be HxW or CxHxW, got rank {n}"
        ))),
    }
}

pub fn decode(args: DecodeArgs) -> CmdResult {
    if args.top_k == 0 {
        return Err(CliError::config("--top-k must be at least 1"));
    }
    let stack = presence_stack(&read(&args.presence)?)?;
    let aux = AuxMaps::new(
        read(&args.wh)?.to_f32_fixed::<Ix3>()?,
        read(&args.offset)?.to_f32_fixed::<Ix3>()?,
        args.stride,
    )?;
    let dets = decode_all(&stack, &aux, args.top_k, args.score_thresh)?;
    let mut out = output(args.output.as_deref())?;
    if args.coco {
        houghvote::decoder::write_coco(&dets, args.image_id, &mut out)?;
        writeln!(out)?;
    } else {
        houghvote::decoder::write_jsonl(&dets, &mut out)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Args, Debug)]
pub struct AttributeArgs {
    /// Evidence tensor, HxWxR or CxHxWxR (then pick one with --class).
    evidence: PathBuf,
    #[arg(long)]
    spec: PathBuf,
    /// Target pixel on the presence map, as `y,x`.
    #[arg(long, value_delimiter = ',', required = true)]
    center: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    class: usize,
    #[arg(long)]
    keep_zeros: bool,
    /// Recompute the presence value by voting and check it equals the vote total.
    #[arg(long)]
    verify: bool,
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Jet-colormap PNG of vote strength per voter pixel.
    #[arg(long)]
    heatmap: Option<PathBuf>,
}

pub fn attribute(args: AttributeArgs) -> CmdResult {
    let field = load_field(&args.spec, &[])?;
    let (stack, _) = evidence_stack(&read(&args.evidence)?)?;
    if args.class >= stack.classes() {
        return Err(CliError::data(format!(
            "class {} requested, evidence has {}",
            args.class,
            stack.classes()
        )));
    }
    let [cy, cx] = args.center[..] else {
        return Err(CliError::config("--center takes exactly two values, y,x"));
    };
    let evidence = stack.class_tensor(args.class);
    let center = (cy, cx);
    let records = attribute_votes(&evidence, &field, center, args.keep_zeros)?;
    let total: f64 = records.iter().map(|r| r.strength).sum();

    if args.verify {
        let presence = vote_scatter(&evidence, &field)?;
        let expected = presence.get(center.0, center.1);
        let scale = presence
            .view()
            .iter()
            .fold(0.0f64, |m, &v| m.max(f64::from(v).abs()));
        let err = (total - f64::from(expected)).abs();
        if err > DUALITY_TOLERANCE * scale.max(f64::MIN_POSITIVE) && err != 0.0 {
            return Err(CliError::data(format!(
                "vote total {total} differs from presence value {expected}"
            )));
        }
    }

    let doc = json!({
        "center": [center.0, center.1],
        "class": args.class,
        "total": total,
        "votes": records,
    });
    let mut out = output(args.output.as_deref())?;
    serde_json::to_writer(&mut out, &doc).map_err(houghvote::Error::from)?;
    writeln!(out)?;
    out.flush()?;

    if let Some(path) = args.heatmap {
        let map = vote_map(&records, evidence.height(), evidence.width())?;
        let img = render_heatmap(map.view(), None)?;
        fs::write(path, houghvote::attribution::encode_png(&img)?)?;
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct InteractionsArgs {
    /// CxHxWxR evidence stack.
    evidence: PathBuf,
    /// CxHxW non-negative class probability maps.
    #[arg(long)]
    probs: PathBuf,
    #[arg(long)]
    spec: PathBuf,
    /// Detections as JSON lines; centers are recovered as floor(box center / stride).
    /// Without this, detections are decoded from the voted evidence.
    #[arg(long)]
    detections: Option<PathBuf>,
    #[arg(long, default_value_t = houghvote::decoder::DEFAULT_STRIDE)]
    stride: u32,
    #[arg(long, default_value_t = houghvote::decoder::DEFAULT_TOP_K)]
    top_k: usize,
    #[command(flatten)]
    backend: BackendOpts,
    /// JSON array of class names.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn read_detections(
    path: &Path,
    stride: u32,
    h: usize,
    w: usize,
) -> Result<Vec<Detection>, CliError> {
    let s = f64::from(stride.max(1));
    let mut dets = Vec::new();
    for (n, line) in fs::read_to_string(path)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value = serde_json::from_str(line).map_err(houghvote::Error::from)?;
        let parse = || -> Option<Detection> {
            let class_id = v.get("class_id")?.as_u64()? as usize;
            let score = v.get("score")?.as_f64()? as f32;
            let b: Vec<f64> = v
                .get("bbox")?
                .as_array()?
                .iter()
                .map(|x| x.as_f64())
                .collect::<Option<_>>()?;
            let [bx, by, bw, bh] = <[f64; 4]>::try_from(b).ok()?;
            let cy = ((by + bh / 2.0) / s).floor().clamp(0.0, (h - 1) as f64) as usize;
            let cx = ((bx + bw / 2.0) / s).floor().clamp(0.0, (w - 1) as f64) as usize;
            Some(Detection {
                class_id,
                score,
                bbox: [bx, by, bw, bh],
                center: (cy, cx),
            })
        };
        dets.push(parse().ok_or_else(|| {
            CliError::data(format!("{}:{}: malformed detection", path.display(), n + 1))
        })?);
    }
    Ok(dets)
}

pub fn interactions(args: InteractionsArgs) -> CmdResult {
    let field = load_field(&args.spec, &[])?;
    let stack = EvidenceStack::new(read(&args.evidence)?.to_f32_fixed::<Ix4>()?)?;
    let probs = read(&args.probs)?.to_f32_fixed::<Ix3>()?;
    if probs.iter().any(|&p| p < 0.0) {
        return Err(CliError::data("probability maps must be non-negative"));
    }
    let (h, w) = (stack.height(), stack.width());
    if h == 0 || w == 0 {
        return Err(CliError::data("evidence has an empty spatial extent"));
    }
    let dets = match &args.detections {
        Some(path) => read_detections(path, args.stride, h, w)?,
        None => {
            let presence = vote_all_classes(&stack, &field, args.backend.backend())?;
            let aux = AuxMaps::new(
                Array3::zeros((h, w, 2)),
                Array3::zeros((h, w, 2)),
                args.stride,
            )?;
            decode_all(&presence, &aux, args.top_k.max(1), f32::NEG_INFINITY)?
        }
    };
    let matrix = class_interactions(&dets, &stack, probs.view(), &field)?;
    let labels = match &args.labels {
        Some(path) => LabelMap::load(path)?,
        None => LabelMap::numbered(stack.classes()),
    };
    let mut out = output(args.output.as_deref())?;
    out.write_all(matrix.to_csv(&labels)?.as_bytes())?;
    out.flush()?;
    Ok(())
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Map sizes as HxW.
    #[arg(long, value_delimiter = ',', default_value = "128x128")]
    sizes: Vec<String>,
    #[arg(long, default_value_t = 80)]
    classes: usize,
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_value = "scatter,gather,kernel,sparse"
    )]
    backends: Vec<BackendArg>,
    #[arg(long, default_value_t = 0.0)]
    sparse_threshold: f32,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fraction of nonzero evidence entries.
    #[arg(long, default_value_t = 1.0)]
    density: f64,
    /// Field spec; defaults to 90 degree bins with rings 2, 8, 16.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn parse_size(s: &str) -> Result<(usize, usize), CliError> {
    let bad = || CliError::config(format!("bad size `{s}`, expected HxW"));
    let (h, w) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok((
        h.trim().parse().map_err(|_| bad())?,
        w.trim().parse().map_err(|_| bad())?,
    ))
}

pub fn bench(args: BenchArgs) -> CmdResult {
    let field = match &args.spec {
        Some(path) => load_field(path, &[])?,
        None => build_vote_field(&VoteFieldSpec::spatial(90, &[2, 8, 16]))?,
    };
    let backends = args
        .backends
        .iter()
        .map(|&b| backend_of(b, args.sparse_threshold))
        .collect::<Vec<_>>();
    let mut rows = Vec::new();
    for size in &args.sizes {
        let (height, width) = parse_size(size)?;
        let config = BenchConfig {
            height,
            width,
            classes: args.classes,
            backends: backends.clone(),
            repeats: args.repeats,
            seed: args.seed,
            density: args.density,
        };
        rows.extend(bench::run_bench(&config, &field)?);
    }
    let mut out = output(args.output.as_deref())?;
    out.write_all(bench::to_csv(&rows).as_bytes())?;
    out.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ConvertTarget {
    F32,
    F64,
    Json,
}

#[derive(Args, Debug)]
pub struct ConvertArgs {
    /// HVT1 tensor, or a JSON document {"shape":[..],"data":[..]}.
    input: PathBuf,
    output: PathBuf,
    #[arg(long, value_enum, default_value = "f32")]
    to: ConvertTarget,
}

fn read_any(path: &Path) -> Result<Tensor, CliError> {
    if path.extension().is_some_and(|e| e == "json") {
        let v: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(path)?).map_err(houghvote::Error::from)?;
        let shape: Vec<usize> =
            serde_json::from_value(v["shape"].clone()).map_err(houghvote::Error::from)?;
        let data: Vec<f64> =
            serde_json::from_value(v["data"].clone()).map_err(houghvote::Error::from)?;
        Ok(Tensor::new(shape, TensorData::F64(data))?)
    } else {
        read(path)
    }
}

pub fn convert(args: ConvertArgs) -> CmdResult {
    let tensor = read_any(&args.input)?;
    match args.to {
        ConvertTarget::F32 => write(&tensor.cast(DType::F32), &args.output),
        ConvertTarget::F64 => write(&tensor.cast(DType::F64), &args.output),
        ConvertTarget::Json => {
            let data: Vec<f64> = tensor.to_f64_array().iter().copied().collect();
            let doc = json!({
                "shape": tensor.shape(),
                "dtype": match tensor.dtype() { DType::F32 => "f32", DType::F64 => "f64" },
                "data": data,
            });
            fs::write(
                &args.output,
                serde_json::to_vec(&doc).map_err(houghvote::Error::from)?,
            )?;
            Ok(())
        }
    }
}
