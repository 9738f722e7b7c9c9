//! The private inference flow between a data owner (DO) and a data
//! scientist (DS) node, timed and sized step by step.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use duetlite_ckks::codec::{deserialize_context, deserialize_eval_keys, serialize_context, serialize_eval_keys};
use duetlite_ckks::context::SPECIAL_PRIME_BITS;
use duetlite_ckks::tensor::{decrypt_vector, encrypt_vector};
use duetlite_ckks::{deserialize_ct, keygen, serialize_ct, CipherVector, CkksContext, KeySet};
use duetlite_node::transport::{connect, Connection, TransportKind};
use duetlite_node::{AccessStatus, Kwargs, Node, NodeError, NodeRuntime, Pointer, Policy, VerifyKey};
use log::info;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{he, protocol, DuetError, Result};
use crate::he::{apply_layer, encrypted_forward, rotation_steps, segment_context};
use crate::mnist::{self, MnistImage};
use crate::model::{
    decode_shapes, encode_shapes, gen_weights, required_depth, split_model, Layer, LayerShape, LayerSpec, Model64,
    SplitModel, SplitPoint,
};
use crate::privacy::{self, PrivacyAudit};
use crate::report::{
    ChainInfo, ComparisonReport, ConfigEcho, FlowReport, FlowRow, InferenceResult, OutputFormat, Processor,
    SetupInfo, SplitSummary, Totals, COMPARE_SCHEMA, FLOW_SCHEMA,
};
use crate::tensor::Tensor;

pub const ROLE_DO: &str = "data_owner";
pub const ROLE_DS: &str = "data_scientist";
pub const FORWARD_PATH: &str = "model.encrypted_forward";

pub const TAG_WEIGHTS: &str = "model_weights";
pub const TAG_MANIFEST: &str = "model_manifest";
pub const TAG_CONTEXT: &str = "ckks_context";
pub const TAG_EVAL_KEYS: &str = "evaluation_key";
pub const TAG_CIPHERTEXT: &str = "ciphertext";
pub const TAG_RESULT: &str = "inference_result";

#[derive(Clone, Debug)]
pub struct FlowConfig {
    pub split_point: SplitPoint,
    pub poly_degree: usize,
    pub scale_bits: u32,
    /// Drives node identities, key generation and encryption randomness.
    pub seed: u64,
    pub weight_seed: u64,
    pub image_index: usize,
    pub image_count: usize,
    pub transport: TransportKind,
    pub output: OutputFormat,
    /// Directory holding an IDX image/label pair; see [`mnist::locate`].
    pub mnist_dir: Option<PathBuf>,
    /// DLW1 file replacing the generated weights.
    pub weights_path: Option<PathBuf>,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            split_point: SplitPoint::Conv2,
            poly_degree: 8192,
            scale_bits: crate::model::SCALE_BITS,
            seed: 0,
            weight_seed: 0,
            image_index: 0,
            image_count: 1,
            transport: TransportKind::InMemory,
            output: OutputFormat::Table,
            mnist_dir: None,
            weights_path: None,
        }
    }
}

impl FlowConfig {
    pub fn mnist_dir(&self) -> PathBuf {
        self.mnist_dir.clone().unwrap_or_else(mnist::default_dir)
    }

    pub fn load_images(&self) -> Result<Vec<MnistImage>> {
        let (images, labels) = mnist::locate(self.mnist_dir())?;
        mnist::load_mnist(images, labels)
    }

    /// The requested window of images, with their dataset indices.
    pub fn select_images(&self) -> Result<Vec<(usize, MnistImage)>> {
        let all = self.load_images()?;
        let end = self.image_index + self.image_count.max(1);
        if end > all.len() {
            return Err(DuetError::Config(format!(
                "images {}..{end} requested but the dataset holds {}",
                self.image_index,
                all.len()
            )));
        }
        Ok(all.into_iter().enumerate().skip(self.image_index).take(end - self.image_index).collect())
    }

    pub fn load_model(&self) -> Result<Model64> {
        match &self.weights_path {
            Some(p) => Model64::load(p),
            None => Ok(gen_weights(self.weight_seed)),
        }
    }

    fn weights_label(&self) -> String {
        match &self.weights_path {
            Some(p) => p.display().to_string(),
            None => format!("generated(seed={})", self.weight_seed),
        }
    }
}

/// Independent streams drawn from the session seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Seeds {
    pub owner_node: u64,
    pub scientist_node: u64,
    pub keygen: u64,
    pub encrypt: u64,
}

impl Seeds {
    pub fn derive(seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        Self {
            owner_node: rng.next_u64(),
            scientist_node: rng.next_u64(),
            keygen: rng.next_u64(),
            encrypt: rng.next_u64(),
        }
    }

    pub fn for_image(&self, image_index: usize) -> u64 {
        self.encrypt.wrapping_add(image_index as u64)
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn timed<R>(f: impl FnOnce() -> R) -> (R, f64) {
    let t = Instant::now();
    let r = f();
    (r, ms(t.elapsed()))
}

/// Per-layer record produced by the DS handler.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerTrace {
    pub name: String,
    pub compute_ns: u64,
    pub serialize_ns: u64,
    pub bytes: u64,
    pub level: u8,
}

const RESULT_MAGIC: &[u8; 4] = b"DRB1";

/// Payload of the DS result object: the layer trace and the output ciphertext.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultBundle {
    pub load_ns: u64,
    pub trace: Vec<LayerTrace>,
    pub logical_len: u32,
    pub ciphertext: Vec<u8>,
}

impl ResultBundle {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = RESULT_MAGIC.to_vec();
        out.extend_from_slice(&self.load_ns.to_le_bytes());
        out.extend_from_slice(&(self.trace.len() as u16).to_le_bytes());
        for t in &self.trace {
            out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.extend_from_slice(&t.compute_ns.to_le_bytes());
            out.extend_from_slice(&t.serialize_ns.to_le_bytes());
            out.extend_from_slice(&t.bytes.to_le_bytes());
            out.push(t.level);
        }
        out.extend_from_slice(&self.logical_len.to_le_bytes());
        out.extend_from_slice(&self.ciphertext);
        out
    }

    pub fn decode(b: &[u8]) -> Result<Self> {
        let bad = || DuetError::Codec("malformed result bundle".into());
        let mut at = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            let s = b.get(at..at + n).ok_or_else(bad)?;
            at += n;
            Ok(s)
        };
        if take(4)? != RESULT_MAGIC {
            return Err(bad());
        }
        let u64_of = |s: &[u8]| u64::from_le_bytes(s.try_into().expect("8 bytes"));
        let load_ns = u64_of(take(8)?);
        let count = u16::from_le_bytes(take(2)?.try_into().expect("2 bytes"));
        let mut trace = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let len = u16::from_le_bytes(take(2)?.try_into().expect("2 bytes")) as usize;
            let name = String::from_utf8(take(len)?.to_vec()).map_err(|_| bad())?;
            trace.push(LayerTrace {
                name,
                compute_ns: u64_of(take(8)?),
                serialize_ns: u64_of(take(8)?),
                bytes: u64_of(take(8)?),
                level: take(1)?[0],
            });
        }
        let logical_len = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes"));
        Ok(Self {
            load_ns,
            trace,
            logical_len,
            ciphertext: b[at..].to_vec(),
        })
    }
}

/// DS-side remote function: deserializes its three arguments, runs the
/// server segment and returns a [`ResultBundle`].
fn forward_handler(server: Arc<Vec<LayerSpec<f64>>>) -> impl Fn(&[Vec<u8>], &Kwargs) -> std::result::Result<Vec<u8>, String> {
    move |args, kwargs| {
        let [ctx_bytes, key_bytes, ct_bytes] = args else {
            return Err(format!("expected 3 arguments, got {}", args.len()));
        };
        let len: usize = kwargs
            .get("length")
            .ok_or("missing length")?
            .parse()
            .map_err(|_| "bad length".to_string())?;
        let s = |e: duetlite_ckks::CkksError| e.to_string();
        let t = Instant::now();
        let ctx = deserialize_context(ctx_bytes).map_err(s)?;
        let keys = deserialize_eval_keys(&ctx, key_bytes).map_err(s)?;
        let ct = deserialize_ct(&ctx, ct_bytes).map_err(s)?;
        let load_ns = t.elapsed().as_nanos() as u64;
        let mut cv = CipherVector::from_parts(&ctx, ct, len).map_err(s)?;
        let mut trace = Vec::with_capacity(server.len());
        let mut last = Vec::new();
        for layer in server.iter() {
            let t = Instant::now();
            cv = apply_layer(&ctx, layer, &cv, &keys).map_err(|e| format!("{}: {e}", layer.name))?;
            let compute_ns = t.elapsed().as_nanos() as u64;
            let t = Instant::now();
            last = serialize_ct(&ctx, cv.ciphertext());
            trace.push(LayerTrace {
                name: layer.name.clone(),
                compute_ns,
                serialize_ns: t.elapsed().as_nanos() as u64,
                bytes: last.len() as u64,
                level: cv.level() as u8,
            });
        }
        Ok(ResultBundle {
            load_ns,
            trace,
            logical_len: cv.logical_len() as u32,
            ciphertext: last,
        }
        .encode())
    }
}

/// Report rows for a plaintext segment: a square directly after a
/// convolution and a flatten both fold into the preceding row.
pub fn row_groups<T: duetlite_ckks::Real>(layers: &[LayerSpec<T>]) -> Vec<(String, Vec<usize>)> {
    let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
    for (i, l) in layers.iter().enumerate() {
        let fold = match l.layer {
            Layer::Flatten => true,
            Layer::Square => i > 0 && matches!(layers[i - 1].layer, Layer::Conv(_)),
            _ => false,
        };
        match groups.last_mut() {
            Some(g) if fold => g.1.push(i),
            _ => groups.push((l.name.clone(), vec![i])),
        }
    }
    groups
}

/// Outcome of one image through an open session.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageRun {
    pub image_index: usize,
    pub label: u8,
    pub rows: Vec<FlowRow>,
    pub logits: Vec<f64>,
    pub encrypt_ms: f64,
    pub ds_compute_ms: f64,
    pub roundtrip_ms: f64,
    pub fresh_ciphertext_bytes: usize,
    pub result_ciphertext_bytes: usize,
}

pub fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
        .0
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn local_err(step: &'static str, msg: String) -> DuetError {
    DuetError::Protocol {
        step,
        source: NodeError::Local(msg),
    }
}

/// Two connected nodes after steps 1-3 and the key half of step 5.
pub struct Session {
    cfg: FlowConfig,
    seeds: Seeds,
    owner: NodeRuntime,
    scientist: NodeRuntime,
    _connection: Connection,
    /// DS-held server segment.
    server: Arc<Vec<LayerSpec<f64>>>,
    /// DO-held copy of the client segment.
    client: Vec<LayerSpec<f64>>,
    server_shapes: Vec<LayerShape>,
    ctx: CkksContext,
    keys: KeySet,
    scientist_key: VerifyKey,
    context_ptr: Pointer,
    keys_ptr: Pointer,
    setup: SetupInfo,
    steps: Vec<i64>,
}

impl Session {
    pub fn open(cfg: &FlowConfig, model: &Model64) -> Result<Self> {
        let seeds = Seeds::derive(cfg.seed);

        // (2) the DS splits its model; only the client half will leave it.
        let split: SplitModel<f64> = split_model(model, cfg.split_point)?;
        let server = Arc::new(split.server.clone());

        let mut ds = Node::new("scientist", ROLE_DS, seeds.scientist_node);
        ds.registry_mut()
            .register(
                FORWARD_PATH,
                &[TAG_CONTEXT, TAG_EVAL_KEYS, TAG_CIPHERTEXT],
                TAG_RESULT,
                true,
                forward_handler(Arc::clone(&server)),
            )
            .map_err(protocol("register"))?;
        ds.set_policy(Policy::auto_approve([TAG_MANIFEST]));
        let mut dn = Node::new("owner", ROLE_DO, seeds.owner_node);
        dn.set_policy(Policy::auto_approve([TAG_EVAL_KEYS]));
        let owner = NodeRuntime::spawn(dn);
        let scientist = NodeRuntime::spawn(ds);

        // (1) signed handshake; roles are asserted strings, not credentials.
        let (connection, handshake_ms) = timed(|| connect(&owner, &scientist, cfg.transport));
        let connection = connection.map_err(protocol("handshake"))?;
        if connection.peer.role != ROLE_DS {
            return Err(local_err("handshake", format!("peer claims role {:?}", connection.peer.role)));
        }
        if connection.peer.export(FORWARD_PATH).is_none() {
            return Err(local_err("handshake", format!("peer does not export {FORWARD_PATH}")));
        }
        let owner_role = scientist.with_node(|n| n.peer(owner.id()).map(|p| p.role.clone()));
        if owner_role.as_deref() != Some(ROLE_DO) {
            return Err(local_err("handshake", format!("owner registered as {owner_role:?}")));
        }
        let sid = scientist.id();
        let scientist_key = connection.peer.key;
        info!("handshake with {} ({}) in {handshake_ms:.1} ms", connection.peer.name, connection.peer.role);

        // (3) client weights need the DS's approval; the manifest carries
        // server shapes only and is readable under the DS policy.
        let client_bytes = Model64 {
            layers: split.client.clone(),
        }
        .to_bytes();
        let manifest = encode_shapes(&split.server);
        let (client_weights_bytes, manifest_bytes) = (client_bytes.len(), manifest.len());
        let (weights_id, manifest_id) = scientist
            .with_node(|n| {
                Ok::<_, NodeError>((
                    n.put_local(client_bytes, TAG_WEIGHTS, "client segment weights", &[])?,
                    n.put_local(manifest, TAG_MANIFEST, "server segment shapes", &[])?,
                ))
            })
            .map_err(protocol("publish weights"))?;
        let t = Instant::now();
        let status = owner
            .request_access(sid, weights_id, "plaintext client segment")
            .map_err(protocol("request weights"))?;
        if let AccessStatus::Pending(req) = status {
            scientist.approve(req).map_err(protocol("approve weights"))?;
        }
        let client = Model64::from_bytes(&owner.get(sid, weights_id).map_err(protocol("fetch weights"))?.payload)?.layers;
        let shapes = decode_shapes(&owner.get(sid, manifest_id).map_err(protocol("fetch manifest"))?.payload)?;
        let weights_transfer_ms = ms(t.elapsed());
        let server_shapes: Vec<LayerShape> = shapes.into_iter().map(|(_, s)| s).collect();

        // (5, keys) parameters follow the depth of the advertised segment.
        let ctx = segment_context(&server_shapes, cfg.poly_degree, cfg.scale_bits)?;
        let steps = rotation_steps(&server_shapes, ctx.slot_count())?;
        let (keys, keygen_ms) = timed(|| keygen(&ctx, &steps, seeds.keygen));
        let keys = keys.map_err(he("key generation"))?;
        let ((context_bytes, key_bytes), key_serialize_ms) =
            timed(|| (serialize_context(&ctx), serialize_eval_keys(&ctx, &keys.eval)));
        let setup = SetupInfo {
            client_weights_bytes,
            manifest_bytes,
            context_bytes: context_bytes.len(),
            eval_key_bytes: key_bytes.len(),
            handshake_ms,
            weights_transfer_ms,
            keygen_ms,
            key_serialize_ms,
        };
        let oid = owner.id();
        let (ctx_id, keys_id) = owner
            .with_node(|n| {
                Ok::<_, NodeError>((
                    n.put_local(context_bytes, TAG_CONTEXT, "CKKS parameters", &[scientist_key])?,
                    n.put_local(key_bytes, TAG_EVAL_KEYS, "public evaluation keys", &[])?,
                ))
            })
            .map_err(protocol("store keys"))?;
        info!(
            "chain {:?} ({} bits), {} rotation keys, {} B of evaluation keys",
            ctx.chain_bit_lengths(),
            ctx.total_modulus_bits(),
            steps.len(),
            setup.eval_key_bytes
        );

        Ok(Self {
            cfg: cfg.clone(),
            seeds,
            owner,
            scientist,
            _connection: connection,
            server,
            client,
            server_shapes,
            ctx,
            keys,
            scientist_key,
            context_ptr: Pointer::new(ctx_id, oid, TAG_CONTEXT),
            keys_ptr: Pointer::new(keys_id, oid, TAG_EVAL_KEYS),
            setup,
            steps,
        })
    }

    pub fn context(&self) -> &CkksContext {
        &self.ctx
    }

    pub fn keys(&self) -> &KeySet {
        &self.keys
    }

    pub fn owner(&self) -> &NodeRuntime {
        &self.owner
    }

    pub fn scientist(&self) -> &NodeRuntime {
        &self.scientist
    }

    pub fn client_layers(&self) -> &[LayerSpec<f64>] {
        &self.client
    }

    pub fn server_layers(&self) -> &[LayerSpec<f64>] {
        &self.server
    }

    pub fn setup(&self) -> &SetupInfo {
        &self.setup
    }

    pub fn chain_info(&self) -> Result<ChainInfo> {
        Ok(ChainInfo {
            depth: required_depth(&self.server_shapes)?,
            prime_bits: self.ctx.chain_bit_lengths(),
            primes: self.ctx.chain().iter().map(|p| p.value()).collect(),
            total_bits: self.ctx.total_modulus_bits(),
            special_prime_bits: SPECIAL_PRIME_BITS,
            scale_bits: self.ctx.scale_bits(),
            poly_degree: self.ctx.poly_degree(),
            slots: self.ctx.slot_count(),
            security_bits: self.ctx.security_bits(),
            rotation_steps: self.steps.clone(),
        })
    }

    /// Steps 4 and 5 (encrypt) through 9 for one image.
    pub fn infer(&self, image: &MnistImage, image_index: usize) -> Result<ImageRun> {
        let bits = self.ctx.total_modulus_bits();
        let mut rows = Vec::new();
        let plain_row = |name: &str, t: &Tensor<f64>, compute_ms: f64| {
            let (wire, serialize_ms) = timed(|| t.to_wire_f32());
            FlowRow {
                forward_step: name.to_string(),
                processor: Processor::DO,
                modulus_bits: None,
                level: None,
                payload_bytes: wire.len(),
                compute_ms,
                serialize_ms,
            }
        };

        // (4) plaintext client segment
        let (mut x, load_ms) = timed(|| image.to_tensor::<f64>());
        rows.push(plain_row("Input Data", &x, load_ms));
        for (name, idx) in row_groups(&self.client) {
            let t = Instant::now();
            for i in idx {
                x = self.client[i].forward(x)?;
            }
            let compute_ms = ms(t.elapsed());
            rows.push(plain_row(&name, &x, compute_ms));
        }

        // (5) encrypt and store with read permission for the DS
        let (cv, encrypt_ms) = timed(|| encrypt_vector(&self.ctx, self.keys.public(), x.data(), self.seeds.for_image(image_index)));
        let cv = cv.map_err(he("encrypt signal"))?;
        let (ct_bytes, serialize_ms) = timed(|| serialize_ct(&self.ctx, cv.ciphertext()));
        let fresh_ciphertext_bytes = ct_bytes.len();
        rows.push(FlowRow {
            forward_step: "Encrypt Signal".into(),
            processor: Processor::DO,
            modulus_bits: Some(bits),
            level: Some(cv.level()),
            payload_bytes: fresh_ciphertext_bytes,
            compute_ms: encrypt_ms,
            serialize_ms,
        });
        let oid = self.owner.id();
        let ct_id = self
            .owner
            .with_node(|n| n.put_local(ct_bytes, TAG_CIPHERTEXT, "encrypted activation", &[self.scientist_key]))
            .map_err(protocol("store ciphertext"))?;
        let ct_ptr = Pointer::new(ct_id, oid, TAG_CIPHERTEXT);

        // (6, 7) remote encrypted forward; (8) pointer back; (9) resolve
        let mut kwargs = Kwargs::new();
        kwargs.insert("length".into(), cv.logical_len().to_string());
        let t = Instant::now();
        let result = self
            .owner
            .remote_call(self.scientist.id(), FORWARD_PATH, &[&self.context_ptr, &self.keys_ptr, &ct_ptr], &kwargs)
            .map_err(protocol("encrypted forward"))?;
        let bundle = self.owner.resolve(&result).map_err(protocol("resolve result"))?;
        let roundtrip_ms = ms(t.elapsed());
        self.owner.drop_pointer(&result).map_err(protocol("release result"))?;
        self.owner
            .with_node(|n| n.delete_local(&ct_id))
            .map_err(protocol("discard ciphertext"))?;

        let bundle = ResultBundle::decode(&bundle)?;
        let mut ds_compute_ms = 0.0;
        for t in &bundle.trace {
            let compute_ms = t.compute_ns as f64 / 1e6;
            ds_compute_ms += compute_ms;
            rows.push(FlowRow {
                forward_step: t.name.clone(),
                processor: Processor::DS,
                modulus_bits: Some(bits),
                level: Some(t.level as usize),
                payload_bytes: t.bytes as usize,
                compute_ms,
                serialize_ms: t.serialize_ns as f64 / 1e6,
            });
        }
        let ct = deserialize_ct(&self.ctx, &bundle.ciphertext).map_err(he("decrypt result"))?;
        let out = CipherVector::from_parts(&self.ctx, ct, bundle.logical_len as usize).map_err(he("decrypt result"))?;
        let logits = decrypt_vector(&self.ctx, &self.keys.secret, &out).map_err(he("decrypt result"))?;

        Ok(ImageRun {
            image_index,
            label: image.label,
            rows,
            logits,
            encrypt_ms,
            ds_compute_ms,
            roundtrip_ms,
            fresh_ciphertext_bytes,
            result_ciphertext_bytes: bundle.ciphertext.len(),
        })
    }

    /// Byte scans over everything the DS saw and everything the DO received.
    pub fn privacy_audit(&self, images: &[&MnistImage]) -> PrivacyAudit {
        let mut ds_needles = Vec::new();
        for img in images {
            ds_needles.extend(privacy::image_needles(img));
        }
        ds_needles.extend(privacy::secret_needles(&self.ctx, &self.keys.secret));
        let weight_needles = privacy::weight_needles(&self.server);
        let ds_hay = privacy::node_haystacks(&self.scientist, false);
        let do_hay = privacy::node_haystacks(&self.owner, true);
        PrivacyAudit {
            ds_frames: ds_hay.iter().filter(|h| h.0.starts_with("log")).count(),
            ds_bytes_scanned: ds_hay.iter().map(|h| h.1.len()).sum(),
            do_bytes_scanned: do_hay.iter().map(|h| h.1.len()).sum(),
            ds_hits: privacy::scan(&ds_hay, &ds_needles),
            do_weight_hits: privacy::scan(&do_hay, &weight_needles),
        }
    }

    pub fn config(&self) -> &FlowConfig {
        &self.cfg
    }
}

/// The whole-model plaintext forward pass as logits.
pub fn reference_logits(model: &Model64, image: &MnistImage) -> Result<Vec<f64>> {
    Ok(model.forward(&image.to_tensor())?.into_data())
}

/// Same computation as the flow with the same seeds, without any node.
pub fn direct_inference(cfg: &FlowConfig, model: &Model64, image: &MnistImage, image_index: usize) -> Result<Vec<f64>> {
    let seeds = Seeds::derive(cfg.seed);
    let split = split_model(model, cfg.split_point)?;
    let shapes = split.server_shapes();
    let ctx = segment_context(&shapes, cfg.poly_degree, cfg.scale_bits)?;
    let keys = keygen(&ctx, &rotation_steps(&shapes, ctx.slot_count())?, seeds.keygen).map_err(he("key generation"))?;
    let mut x = image.to_tensor::<f64>();
    for l in &split.client {
        x = l.forward(x)?;
    }
    let cv = encrypt_vector(&ctx, keys.public(), x.data(), seeds.for_image(image_index)).map_err(he("encrypt signal"))?;
    let out = encrypted_forward(&ctx, &split.server, cv, &keys.eval, |_, _| {}).map_err(he("encrypted forward"))?;
    decrypt_vector(&ctx, &keys.secret, &out).map_err(he("decrypt result"))
}

fn build_report(session: &Session, run: ImageRun, reference: Vec<f64>) -> Result<FlowReport> {
    let cfg = session.config();
    let sum = |p: Processor, f: fn(&FlowRow) -> f64| run.rows.iter().filter(|r| r.processor == p).map(f).sum::<f64>();
    let bytes = |p: Processor| run.rows.iter().filter(|r| r.processor == p).map(|r| r.payload_bytes).sum();
    let totals = Totals {
        do_compute_ms: sum(Processor::DO, |r| r.compute_ms),
        ds_compute_ms: run.ds_compute_ms,
        serialize_ms: run.rows.iter().map(|r| r.serialize_ms).sum(),
        roundtrip_ms: run.roundtrip_ms,
        do_bytes: bytes(Processor::DO),
        ds_bytes: bytes(Processor::DS),
    };
    let result = InferenceResult {
        image_index: run.image_index,
        label: run.label,
        predicted: argmax(&run.logits),
        reference_predicted: argmax(&reference),
        max_abs_error: max_abs_diff(&run.logits, &reference),
        logits: run.logits,
        reference_logits: reference,
    };
    Ok(FlowReport {
        schema: FLOW_SCHEMA.into(),
        config: ConfigEcho {
            split_point: cfg.split_point,
            poly_degree: cfg.poly_degree,
            scale_bits: cfg.scale_bits,
            seed: cfg.seed,
            weight_seed: cfg.weight_seed,
            weights: cfg.weights_label(),
            image_index: run.image_index,
            transport: cfg.transport.to_string(),
        },
        chain: session.chain_info()?,
        setup: session.setup().clone(),
        rows: run.rows,
        totals,
        result,
    })
}

/// One image through a fresh session, with an explicit model and image.
pub fn run_flow_with(cfg: &FlowConfig, model: &Model64, image: &MnistImage, image_index: usize) -> Result<FlowReport> {
    let session = Session::open(cfg, model)?;
    let run = session.infer(image, image_index)?;
    build_report(&session, run, reference_logits(model, image)?)
}

/// Loads data and weights per `cfg` and runs the flow for every selected
/// image in one session.
pub fn run_flow(cfg: &FlowConfig) -> Result<Vec<FlowReport>> {
    let images = cfg.select_images()?;
    let model = cfg.load_model()?;
    let session = Session::open(cfg, &model)?;
    images
        .iter()
        .map(|(i, img)| {
            let run = session.infer(img, *i)?;
            build_report(&session, run, reference_logits(&model, img)?)
        })
        .collect()
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => v[n / 2],
        n => (v[n / 2 - 1] + v[n / 2]) / 2.0,
    }
}

fn summarize(cfg: &FlowConfig, model: &Model64, images: &[(usize, MnistImage)], repeats: usize) -> Result<SplitSummary> {
    let session = Session::open(cfg, model)?;
    let n = images.len().max(1) as f64;
    let (mut enc, mut ds, mut rt) = (Vec::new(), Vec::new(), Vec::new());
    let mut first: Option<ImageRun> = None;
    let (mut agree, mut max_err) = (0, 0.0f64);
    for rep in 0..repeats.max(1) {
        let (mut e, mut d, mut r) = (0.0, 0.0, 0.0);
        for (i, img) in images {
            let run = session.infer(img, *i)?;
            e += run.encrypt_ms;
            d += run.ds_compute_ms;
            r += run.roundtrip_ms;
            if rep == 0 {
                let reference = reference_logits(model, img)?;
                agree += usize::from(argmax(&run.logits) == argmax(&reference));
                max_err = max_err.max(max_abs_diff(&run.logits, &reference));
                first.get_or_insert(run);
            }
        }
        enc.push(e / n);
        ds.push(d / n);
        rt.push(r / n);
    }
    let first = first.ok_or_else(|| DuetError::Config("no images to compare".into()))?;
    Ok(SplitSummary {
        split_point: cfg.split_point,
        modulus_bits: session.context().total_modulus_bits(),
        depth: required_depth(&session.server_shapes)?,
        fresh_ciphertext_bytes: first.fresh_ciphertext_bytes,
        result_ciphertext_bytes: first.result_ciphertext_bytes,
        eval_key_bytes: session.setup().eval_key_bytes,
        do_encrypt_ms: median(&enc),
        ds_compute_ms: median(&ds),
        roundtrip_ms: median(&rt),
        ds_compute_runs_ms: ds,
        images: images.len(),
        argmax_agreement: agree,
        max_abs_error: max_err,
        rows: first.rows,
    })
}

/// Both supported splits over the same images; timings are medians over
/// `repeats` passes.
pub fn compare_splits_with(
    cfg: &FlowConfig,
    model: &Model64,
    images: &[(usize, MnistImage)],
    repeats: usize,
) -> Result<ComparisonReport> {
    let at = |split| FlowConfig {
        split_point: split,
        ..cfg.clone()
    };
    let conv2 = summarize(&at(SplitPoint::Conv2), model, images, repeats)?;
    let fc1_act = summarize(&at(SplitPoint::Fc1Act), model, images, repeats)?;
    Ok(ComparisonReport {
        schema: COMPARE_SCHEMA.into(),
        seed: cfg.seed,
        weight_seed: cfg.weight_seed,
        poly_degree: cfg.poly_degree,
        images: images.len(),
        repeats: repeats.max(1),
        size_ratio: fc1_act.fresh_ciphertext_bytes as f64 / conv2.fresh_ciphertext_bytes as f64,
        ds_speedup: conv2.ds_compute_ms / fc1_act.ds_compute_ms,
        encrypt_speedup: conv2.do_encrypt_ms / fc1_act.do_encrypt_ms,
        conv2,
        fc1_act,
    })
}

pub fn compare_splits(cfg: &FlowConfig, repeats: usize) -> Result<ComparisonReport> {
    let images = cfg.select_images()?;
    let model = cfg.load_model()?;
    compare_splits_with(cfg, &model, &images, repeats)
}
