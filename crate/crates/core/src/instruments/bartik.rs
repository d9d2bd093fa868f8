use std::collections::BTreeMap;

use crate::data::IndustryPanel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BartikVector {
    pub base_year: i32,
    pub end_year: i32,
    /// District -> labor-share-weighted national wage change.
    pub delta_wage: BTreeMap<u32, f64>,
    /// District -> wage-share-weighted national employment change.
    pub delta_labor: BTreeMap<u32, f64>,
}

/// Shift-share exposures. National changes are plain means across
/// districts of the end-minus-base level change of each industry.
pub fn bartik(ind: &IndustryPanel) -> Result<BartikVector> {
    let (b, e) = (ind.base_year, ind.end_year);
    let industries = ind.industries();
    let districts = ind.districts();
    for d in &districts {
        for k in &industries {
            for y in [b, e] {
                if ind.get(*d, k, y).is_none() {
                    return Err(Error::invalid(format!(
                        "industry panel lacks district {d}, industry {k}, year {y}"
                    )));
                }
            }
        }
    }
    let nd = districts.len() as f64;
    let mut dy = BTreeMap::new();
    let mut dl = BTreeMap::new();
    for k in &industries {
        let (mut sy, mut sl) = (0.0, 0.0);
        for d in &districts {
            let (o0, o1) = (ind.get(*d, k, b).unwrap(), ind.get(*d, k, e).unwrap());
            sy += o1.avg_wage - o0.avg_wage;
            sl += o1.employment - o0.employment;
        }
        dy.insert(k.as_str(), sy / nd);
        dl.insert(k.as_str(), sl / nd);
    }
    let mut delta_wage = BTreeMap::new();
    let mut delta_labor = BTreeMap::new();
    for d in &districts {
        let lsum: f64 = industries.iter().map(|k| ind.get(*d, k, b).unwrap().employment).sum();
        let ysum: f64 = industries.iter().map(|k| ind.get(*d, k, b).unwrap().avg_wage).sum();
        if !(lsum > 0.0 && ysum > 0.0) {
            return Err(Error::invalid(format!("district {d}: zero base-year employment or wages")));
        }
        let (mut bw, mut bl) = (0.0, 0.0);
        for k in &industries {
            let o = ind.get(*d, k, b).unwrap();
            bw += o.employment / lsum * dy[k.as_str()];
            bl += o.avg_wage / ysum * dl[k.as_str()];
        }
        delta_wage.insert(*d, bw);
        delta_labor.insert(*d, bl);
    }
    Ok(BartikVector {
        base_year: b,
        end_year: e,
        delta_wage,
        delta_labor,
    })
}
