//! WebAssembly bindings for the browser demo in `www/`.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use pbkc::compile::{compile_with, CompileOptions};
use pbkc::ddnnf::write_d4;
use pbkc::encode::{encode_feature_model, encode_group};
use pbkc::fm::{parse_uvl, Feature, FeatureModel, GroupKind};
use pbkc::opb::parse_opb;
use pbkc::pb::{raw_stats, Var};

#[derive(Serialize)]
pub struct CardReport {
    pub count: String,
    pub constraints: usize,
    pub literals: usize,
    pub nodes: usize,
    pub edges: usize,
}

#[derive(Serialize)]
pub struct Compiled {
    pub count: String,
    pub nodes: usize,
    pub edges: usize,
    pub d4: String,
}

#[derive(Serialize)]
pub struct ModelReport {
    pub count: String,
    pub features: usize,
    pub vars: u32,
    pub constraints: usize,
}

fn compiled_count(f: &pbkc::pb::PbFormula) -> Result<(pbkc::ddnnf::Dnnf, String), String> {
    let (d, _) = compile_with(f, &CompileOptions::default()).map_err(|e| e.to_string())?;
    let c = d.count().map_err(|e| e.to_string())?;
    Ok((d, c.to_string()))
}

/// Root with one `[lower..upper]` group over `children` leaves.
pub fn card_group(children: u32, lower: u32, upper: u32) -> Result<CardReport, String> {
    if children == 0 || lower > upper || upper > children {
        return Err(format!("need 0 <= lower <= upper <= children, got [{lower}..{upper}] over {children}"));
    }
    let kids = (0..children).map(|i| Feature::new(format!("c{i}"))).collect();
    let m = FeatureModel::new(Feature::new("r").with_group(GroupKind::Card(lower, upper), kids));
    let enc = encode_feature_model(&m).map_err(|e| e.to_string())?;
    let group_vars: Vec<Var> = (2..=children + 1).map(Var::new).collect();
    let (constraints, literals) = raw_stats(&encode_group(Var::new(1), GroupKind::Card(lower, upper), &group_vars));
    let (d, count) = compiled_count(&enc.formula)?;
    Ok(CardReport { count, constraints, literals, nodes: d.node_count(), edges: d.edge_count() })
}

pub fn opb_to_ddnnf(text: &str) -> Result<Compiled, String> {
    let f = parse_opb(text).map_err(|e| e.to_string())?;
    let (d, count) = compiled_count(&f)?;
    Ok(Compiled { count, nodes: d.node_count(), edges: d.edge_count(), d4: write_d4(&d.padded()) })
}

pub fn uvl_count(text: &str) -> Result<ModelReport, String> {
    let m = parse_uvl(text).map_err(|e| e.to_string())?;
    let enc = encode_feature_model(&m).map_err(|e| e.to_string())?;
    let s = enc.formula.stats();
    let (_, count) = compiled_count(&enc.formula)?;
    Ok(ModelReport { count, features: m.feature_count(), vars: s.vars, constraints: s.constraints })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.map(|v| serde_json::to_string(&v).expect("plain data serializes")).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = cardGroup)]
pub fn card_group_js(children: u32, lower: u32, upper: u32) -> Result<String, JsValue> {
    to_js(card_group(children, lower, upper))
}

#[wasm_bindgen(js_name = compileOpb)]
pub fn compile_opb_js(text: &str) -> Result<String, JsValue> {
    to_js(opb_to_ddnnf(text))
}

#[wasm_bindgen(js_name = countUvl)]
pub fn count_uvl_js(text: &str) -> Result<String, JsValue> {
    to_js(uvl_count(text))
}
