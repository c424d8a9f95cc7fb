//! Drives the exported C functions the way a C caller would.

use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use mfi_pso::classifier::{self, train, ModelSpec, TrainConfig};
use mfi_pso::data::{synth_blobs, BlobParams, Dataset};
use mfi_pso_ffi::*;

fn fixture(dir: &Path) -> (CString, Dataset) {
    let data = synth_blobs(BlobParams { per_class: 40, ..Default::default() }).unwrap();
    let model = train(&ModelSpec::default(), &data, &TrainConfig { epochs: 20, ..Default::default() }).unwrap();
    let path = dir.join("model.ckpt");
    classifier::save(&model, &path).unwrap();
    (CString::new(path.to_str().unwrap()).unwrap(), data)
}

fn last_error() -> String {
    let p = mfi_last_error();
    assert!(!p.is_null(), "expected an error message");
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn load(path: &CString) -> *mut MfiModel {
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { mfi_model_load(path.as_ptr(), &mut model) }, MfiStatus::Ok);
    assert!(!model.is_null());
    model
}

#[test]
fn load_predict_and_map() {
    let dir = tempfile::tempdir().unwrap();
    let (path, data) = fixture(dir.path());
    let model = load(&path);
    unsafe {
        assert_eq!(mfi_model_input_dim(model), 64);
        assert_eq!(mfi_model_num_classes(model), 3);
        let img = &data.images[0];
        let mut probs = [0.0; 3];
        assert_eq!(mfi_predict(model, img.pixels.as_ptr(), 64, probs.as_mut_ptr(), 3), MfiStatus::Ok);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(mfi_last_error().is_null());

        let mut small = [0.0; 2];
        assert_eq!(
            mfi_predict(model, img.pixels.as_ptr(), 64, small.as_mut_ptr(), 2),
            MfiStatus::BufferTooSmall
        );

        let mut v = 0.0;
        let label = data.labels[0] as i64;
        assert_eq!(mfi_image_mfi(model, img.pixels.as_ptr(), 8, 8, 1, label, &mut v), MfiStatus::Ok);
        assert!(v >= 0.0 && v.is_finite());
        assert_eq!(mfi_image_mfi(model, img.pixels.as_ptr(), 8, 8, 1, -1, &mut v), MfiStatus::InvalidInput);

        let mut need = 0usize;
        assert_eq!(
            mfi_pixel_map(model, img.pixels.as_ptr(), 8, 8, 1, label, -1, ptr::null_mut(), 0, &mut need),
            MfiStatus::BufferTooSmall
        );
        assert_eq!(need, 64);
        let mut map = vec![0.0; need];
        assert_eq!(
            mfi_pixel_map(model, img.pixels.as_ptr(), 8, 8, 1, label, -1, map.as_mut_ptr(), need, &mut need),
            MfiStatus::Ok
        );
        assert!(map.iter().all(|v| v.is_finite() && *v >= 0.0));
        mfi_model_free(model);
    }
}

#[test]
fn attack_through_handles() {
    let dir = tempfile::tempdir().unwrap();
    let (path, data) = fixture(dir.path());
    let model = load(&path);
    let spec = CString::new(r#"{"m": 3, "swarm": {"particles": 30, "max_iterations": 50, "seed": 1}}"#).unwrap();
    unsafe {
        let img = &data.images[5];
        let mut result = ptr::null_mut();
        let status = mfi_attack(model, img.pixels.as_ptr(), 8, 8, 1, data.labels[5] as i64, spec.as_ptr(), &mut result);
        assert_eq!(status, MfiStatus::Ok, "{}", last_error());
        let mut adv = vec![0.0; 64];
        let mut need = 0;
        assert_eq!(mfi_result_adversarial(result, adv.as_mut_ptr(), 64, &mut need), MfiStatus::Ok);
        assert_eq!(need, 64);
        let changed = adv.iter().zip(&img.pixels).filter(|(a, b)| a != b).count();
        assert!(changed <= 3);
        for (a, b) in adv.iter().zip(&img.pixels) {
            assert!((a - b).abs() <= 0.15 && (0.0..=1.0).contains(a));
        }
        let success = mfi_result_success(result);
        assert!(success == 0 || success == 1);
        assert!(mfi_result_label_after(result) >= 0);

        let mut json = ptr::null_mut();
        assert_eq!(mfi_result_to_json(result, &mut json), MfiStatus::Ok);
        let text = CStr::from_ptr(json).to_str().unwrap().to_owned();
        mfi_string_free(json);
        let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed["success"].as_bool().unwrap(), success == 1);
        assert_eq!(parsed["coords"].as_array().unwrap().len(), 3);

        mfi_result_free(result);
        mfi_model_free(model);
    }
}

#[test]
fn errors_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    unsafe {
        let mut model = ptr::null_mut();
        let missing = CString::new(dir.path().join("nope.ckpt").to_str().unwrap()).unwrap();
        assert_eq!(mfi_model_load(missing.as_ptr(), &mut model), MfiStatus::Io);
        assert!(last_error().contains("nope.ckpt"));
        assert!(model.is_null());

        assert_eq!(mfi_model_load(ptr::null(), &mut model), MfiStatus::NullArgument);
        let junk = dir.path().join("junk.ckpt");
        std::fs::write(&junk, b"not a checkpoint").unwrap();
        let junk = CString::new(junk.to_str().unwrap()).unwrap();
        assert_eq!(mfi_model_load(junk.as_ptr(), &mut model), MfiStatus::Parse);

        let (path, data) = fixture(dir.path());
        let model = load(&path);
        let bad = CString::new("{not json").unwrap();
        let conflicting = CString::new(r#"{"m": 2, "pixel_indices": [1, 2]}"#).unwrap();
        let mut result = ptr::null_mut();
        let img = &data.images[0];
        assert_eq!(mfi_attack(model, img.pixels.as_ptr(), 8, 8, 1, 0, bad.as_ptr(), &mut result), MfiStatus::Parse);
        assert_eq!(
            mfi_attack(model, img.pixels.as_ptr(), 8, 8, 1, 0, conflicting.as_ptr(), &mut result),
            MfiStatus::InvalidInput
        );
        assert!(last_error().contains("pixel_indices"));
        assert!(result.is_null());
        assert_eq!(mfi_predict(ptr::null(), img.pixels.as_ptr(), 64, ptr::null_mut(), 0), MfiStatus::NullArgument);

        // round trip through the save entry point
        let copy = CString::new(dir.path().join("copy.ckpt").to_str().unwrap()).unwrap();
        assert_eq!(mfi_model_save(model, copy.as_ptr()), MfiStatus::Ok);
        mfi_model_free(model);
        let again = load(&copy);
        mfi_model_free(again);

        mfi_model_free(ptr::null_mut());
        mfi_result_free(ptr::null_mut());
        mfi_string_free(ptr::null_mut());
    }
    assert!(!unsafe { CStr::from_ptr(mfi_version()) }.to_bytes().is_empty());
}

#[test]
fn generated_header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include").join("mfi_pso.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for symbol in ["mfi_model_load", "mfi_attack", "mfi_result_free", "mfi_last_error", "MFI_STATUS_OK"] {
        assert!(text.contains(symbol), "{symbol} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(&src, "#include \"mfi_pso.h\"\nint main(void) { MfiModel *m = 0; return (int)mfi_model_num_classes(m); }\n").unwrap();
    match Command::new("cc")
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(header.parent().unwrap())
        .arg(&src)
        .status()
    {
        Ok(status) => assert!(status.success(), "header failed to compile"),
        Err(_) => eprintln!("no C compiler on PATH; skipped compiling the header"),
    }
}
