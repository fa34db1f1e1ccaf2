//! Weight editors mapping a checkpoint and a rewrite request to an edited
//! checkpoint: rank-one (ROME), multi-layer spreading (MEMIT-lite) and
//! box-constrained fine-tuning (FT-L).

pub mod efficacy;
pub mod ftl;
pub mod key;
pub mod memit;
pub mod outcome;
pub mod params;
pub mod request;
pub mod rome;
pub mod value;

pub use efficacy::{efficacy_check, EfficacyReport};
pub use ftl::{ftl_edit, project_linf};
pub use key::{collect_key, estimate_covariance, locate_subject, sample_prefixes, Covariance, SubjectSite};
pub use memit::memit_lite_edit;
pub use outcome::{EditDiagnostics, EditOutcome, FineTuneTrace, LayerDelta, RankOneStep};
pub use params::{parse_kv, EditorKind, EditorParams};
pub use request::{fill_template, RewriteRequest, PLACEHOLDER};
pub use rome::{rome_edit, EditContext, RankOneUpdate};
pub use value::{solve_value, ValueSolution};

use crate::error::Result;
use crate::tinylm::Checkpoint;

/// Runs the editor selected by `params.kind`. `NONE` returns an unchanged copy.
pub fn apply_edit(ckpt: &Checkpoint, request: &RewriteRequest, params: &EditorParams, ctx: &EditContext) -> Result<EditOutcome> {
    match params.kind {
        EditorKind::None => {
            request.validate()?;
            Ok(EditOutcome::new(EditorKind::None, ckpt, ckpt.clone(), vec![], EditDiagnostics::default()))
        }
        EditorKind::Rome => rome_edit(ckpt, request, params, ctx),
        EditorKind::MemitLite => memit_lite_edit(ckpt, request, params, ctx),
        EditorKind::FtL => ftl_edit(ckpt, request, params),
    }
}
