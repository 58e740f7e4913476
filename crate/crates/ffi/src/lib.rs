//! C ABI over the `gft` crate.
//!
//! Every function returns a [`GftStatus`]. On failure a message is kept per
//! thread and can be read with [`gft_last_error_message`]. Networks are
//! opaque handles created by `gft_network_*` constructors and released with
//! [`gft_network_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use gft::accounting::{model_bits, EnergyConstants, ParamCounts};
use gft::arch::parse_arch;
use gft::checkpoint::Checkpoint;
use gft::config::RunConfig;
use gft::data::DatasetSpec;
use gft::forward::predict;
use gft::hardness::{parse_dimacs, verify_equivalence};
use gft::trainer::{evaluate, train};
use gft::{build_network, BitWidth, Error, FloatMatrix, LayerKind, LayerSpec, LossKind, Network};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GftStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Validation = 3,
    Capacity = 4,
    Config = 5,
    Parse = 6,
    Checkpoint = 7,
    Io = 8,
    Timeout = 9,
    BufferTooSmall = 10,
    Panic = 11,
}

/// Opaque network handle.
pub struct GftNetwork {
    inner: Network,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> GftStatus {
    match e {
        Error::Validation(_) => GftStatus::Validation,
        Error::Capacity { .. } => GftStatus::Capacity,
        Error::Timeout { .. } => GftStatus::Timeout,
        Error::Idx(_) | Error::Dimacs { .. } => GftStatus::Parse,
        Error::Checkpoint(_) => GftStatus::Checkpoint,
        Error::Config { .. } => GftStatus::Config,
        Error::Io(_) => GftStatus::Io,
    }
}

struct Fail(GftStatus);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        set_error(e.to_string());
        Fail(status_of(&e))
    }
}

fn fail(status: GftStatus, msg: &str) -> Fail {
    set_error(msg);
    Fail(status)
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> GftStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GftStatus::Ok,
        Ok(Err(Fail(s))) => s,
        Err(_) => {
            set_error("internal panic");
            GftStatus::Panic
        }
    }
}

/// # Safety
/// `s` must be null or a NUL-terminated string.
unsafe fn text<'a>(s: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if s.is_null() {
        return Err(fail(GftStatus::NullPointer, &format!("{what} is null")));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(GftStatus::InvalidUtf8, &format!("{what} is not UTF-8")))
}

fn out_ptr<T>(p: *mut T, what: &str) -> Result<(), Fail> {
    if p.is_null() {
        Err(fail(GftStatus::NullPointer, &format!("{what} is null")))
    } else {
        Ok(())
    }
}

/// # Safety
/// `net` must be null or a live handle.
unsafe fn handle<'a>(net: *const GftNetwork) -> Result<&'a GftNetwork, Fail> {
    net.as_ref()
        .ok_or_else(|| fail(GftStatus::NullPointer, "network handle is null"))
}

fn boxed(inner: Network) -> *mut GftNetwork {
    Box::into_raw(Box::new(GftNetwork { inner }))
}

/// Message for the last failure on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gft_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Freshly initialised network for an architecture string such as
/// `784-256q2-10`.
///
/// # Safety
/// `arch` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn gft_network_new(arch: *const c_char, seed: u64, out: *mut *mut GftNetwork) -> GftStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let specs = parse_arch(text(arch, "arch")?)?;
        *out = boxed(build_network(&specs, seed)?);
        Ok(())
    })
}

/// Network stored in a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn gft_network_load(path: *const c_char, out: *mut *mut GftNetwork) -> GftStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let ck = Checkpoint::load(Path::new(text(path, "path")?))?;
        *out = boxed(ck.network);
        Ok(())
    })
}

/// Writes the network as a checkpoint without optimizer state.
///
/// # Safety
/// `net` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gft_network_save(net: *const GftNetwork, path: *const c_char) -> GftStatus {
    guard(|| {
        let net = handle(net)?;
        let ck = Checkpoint {
            seed: 0,
            iteration: 0,
            optimizer: vec![None; net.inner.layers.len()],
            network: net.inner.clone(),
        };
        ck.save(Path::new(text(path, "path")?))?;
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `net` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gft_network_free(net: *mut GftNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// # Safety
/// `net` must be a live handle; `d_in` and `d_out` writable.
#[no_mangle]
pub unsafe extern "C" fn gft_network_dims(net: *const GftNetwork, d_in: *mut usize, d_out: *mut usize) -> GftStatus {
    guard(|| {
        let net = handle(net)?;
        out_ptr(d_in, "d_in")?;
        out_ptr(d_out, "d_out")?;
        *d_in = net.inner.input_dim();
        *d_out = net.inner.output_dim();
        Ok(())
    })
}

/// Logits for `rows` row-major samples of the network's input width.
/// `out` must hold `rows * d_out` values.
///
/// # Safety
/// `x` must point to `rows * d_in` readable doubles and `out` to `out_len`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn gft_network_predict(
    net: *const GftNetwork,
    x: *const f64,
    rows: usize,
    out: *mut f64,
    out_len: usize,
) -> GftStatus {
    guard(|| {
        let net = handle(net)?;
        out_ptr(x.cast_mut(), "x")?;
        out_ptr(out, "out")?;
        let (d_in, d_out) = (net.inner.input_dim(), net.inner.output_dim());
        let needed = rows * d_out;
        if out_len < needed {
            return Err(fail(
                GftStatus::BufferTooSmall,
                &format!("output buffer holds {out_len} values, need {needed}"),
            ));
        }
        let input = std::slice::from_raw_parts(x, rows * d_in).to_vec();
        let logits = predict(&FloatMatrix::from_vec(rows, d_in, input)?, &net.inner)?;
        ptr::copy_nonoverlapping(logits.as_slice().as_ptr(), out, needed);
        Ok(())
    })
}

/// Accuracy and mean softmax cross-entropy on a dataset descriptor
/// (`mnist:<dir>`, `mnist-test:<dir>`, `synthetic:<d>,<n>,<margin>,<seed>`).
///
/// # Safety
/// `net` must be a live handle, `dataset` a NUL-terminated string,
/// `accuracy` and `mean_loss` writable.
#[no_mangle]
pub unsafe extern "C" fn gft_network_evaluate(
    net: *const GftNetwork,
    dataset: *const c_char,
    accuracy: *mut f64,
    mean_loss: *mut f64,
) -> GftStatus {
    guard(|| {
        let net = handle(net)?;
        out_ptr(accuracy, "accuracy")?;
        out_ptr(mean_loss, "mean_loss")?;
        let ds = text(dataset, "dataset")?.parse::<DatasetSpec>()?.load()?;
        let e = evaluate(&net.inner, &ds, LossKind::SoftmaxXent)?;
        *accuracy = e.accuracy;
        *mean_loss = e.mean_loss;
        Ok(())
    })
}

/// Trains from config text (the same format as the CLI) and returns the
/// trained network. `final_accuracy` receives the last evaluation, or NaN
/// when no step ran.
///
/// # Safety
/// `config` must be a NUL-terminated string; `out` and `final_accuracy`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn gft_train(
    config: *const c_char,
    out: *mut *mut GftNetwork,
    final_accuracy: *mut f64,
) -> GftStatus {
    guard(|| {
        out_ptr(out, "out")?;
        out_ptr(final_accuracy, "final_accuracy")?;
        let cfg = RunConfig::parse(text(config, "config")?)?;
        let dataset = cfg.dataset.load()?;
        let eval = cfg.eval_dataset.as_ref().map(DatasetSpec::load).transpose()?;
        let tc = cfg.train_config(dataset.len());
        let network = build_network(&cfg.arch, tc.seed)?;
        let outcome = train(&tc, network, &dataset, eval.as_ref())?;
        *final_accuracy = outcome.final_eval.map_or(f64::NAN, |e| e.accuracy);
        *out = boxed(outcome.state.network);
        Ok(())
    })
}

/// Storage bits of an architecture: 32 per full-precision parameter and
/// `b` per quantized one.
///
/// # Safety
/// `arch` must be a NUL-terminated string and `bits` writable.
#[no_mangle]
pub unsafe extern "C" fn gft_model_bits(arch: *const c_char, bits: *mut u64) -> GftStatus {
    guard(|| {
        out_ptr(bits, "bits")?;
        *bits = model_bits(&parse_arch(text(arch, "arch")?)?);
        Ok(())
    })
}

/// Optimizer-step energy in pJ under the default constants for `steps`
/// steps over `fp_params` AdamW parameters and `q_params` GFT parameters
/// of width `bits` (2, 3 or 4).
///
/// # Safety
/// `energy_pj` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gft_energy_pj(
    fp_params: u64,
    q_params: u64,
    bits: u8,
    steps: u64,
    energy_pj: *mut f64,
) -> GftStatus {
    guard(|| {
        out_ptr(energy_pj, "energy_pj")?;
        let layer = |n: u64, kind| LayerSpec {
            d_in: 1,
            d_out: n as usize,
            kind,
            activation: gft::Activation::Identity,
        };
        let specs = [
            layer(fp_params, LayerKind::FullPrecision),
            layer(q_params, LayerKind::Quantized(BitWidth::new(bits)?)),
        ];
        let per_step = ParamCounts::of(&specs).step_energy(&EnergyConstants::default())?;
        *energy_pj = per_step * steps as f64;
        Ok(())
    })
}

/// Brute-forces a DIMACS 3-CNF and its separability reduction.
/// `agree` is false only if the two deciders or witness checks disagree.
///
/// # Safety
/// `dimacs` must be a NUL-terminated string; the three outputs writable.
#[no_mangle]
pub unsafe extern "C" fn gft_hardness_verify(
    dimacs: *const c_char,
    satisfiable: *mut bool,
    separable: *mut bool,
    agree: *mut bool,
) -> GftStatus {
    guard(|| {
        out_ptr(satisfiable, "satisfiable")?;
        out_ptr(separable, "separable")?;
        out_ptr(agree, "agree")?;
        let report = verify_equivalence(&parse_dimacs(text(dimacs, "dimacs")?)?)?;
        *satisfiable = report.satisfiable();
        *separable = report.separable();
        *agree = report.agree();
        Ok(())
    })
}
