use crate::choice::{fit_logit, ChoiceObservation, FeKey, FeLevel, FitOptions, FitResult, ModelSpec};
use crate::data::{AgentId, SurveyChoices};
use crate::error::{Error, Result};
use crate::geo::World;

#[derive(Debug, Clone)]
pub struct SurveyAmenities {
    /// Amenity by city index; the lowest-id city is the reference (0).
    pub amenity: Vec<f64>,
    pub se: Vec<f64>,
    pub fit: FitResult,
}

/// Stated-preference amenities: conditional logit of the dream city over
/// every city, with destination effects and distance terms from the
/// respondent's current city and no network or wage terms.
pub fn amenities_from_survey(survey: &SurveyChoices, world: &World) -> Result<SurveyAmenities> {
    if survey.rows.is_empty() {
        return Err(Error::invalid("survey has no responses"));
    }
    let zero = vec![0u32; world.len()];
    let obs: Vec<ChoiceObservation> = survey
        .rows
        .iter()
        .map(|r| {
            Ok(ChoiceObservation::exhaustive(
                world,
                AgentId(r.respondent),
                0,
                world.require_index(r.current)?,
                world.require_index(r.dream)?,
                &zero,
            ))
        })
        .collect::<Result<_>>()?;
    let mut spec = ModelSpec::new(FeLevel::Destination);
    spec.network = false;
    let options = FitOptions {
        prune: false,
        fe_standard_errors: true,
        ..FitOptions::default()
    };
    let fit = fit_logit(&obs, &spec, world, &options)?;
    let mut amenity = vec![0.0; world.len()];
    let mut se = vec![0.0; world.len()];
    for (j, c) in world.cities().iter().enumerate() {
        let e = fit
            .fe
            .binary_search_by(|e| e.key.cmp(&FeKey::Destination(c.id)))
            .map(|i| &fit.fe[i])
            .map_err(|_| Error::Separation {
                covariate: FeKey::Destination(c.id).label(),
            })?;
        amenity[j] = e.value;
        se[j] = e.se.unwrap_or(0.0);
    }
    Ok(SurveyAmenities { amenity, se, fit })
}
