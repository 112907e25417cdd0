// Library walk-through: fit a mean-score-parity transform on a biased
// synthetic sample and compare metrics before and after.

#include <cstdio>

#include "fst/fst.hpp"

int main() {
  fst::SynthConfig cfg;
  cfg.n = 2000;
  cfg.seed = 7;
  const fst::Dataset train = fst::synthesize(cfg);

  fst::ConstraintSpec spec;
  spec.kind = fst::ConstraintKind::MeanScoreParity;
  spec.epsilon = 0.02;

  const fst::FstModel model = fst::fit(train, spec, fst::Mode::PostProcess);
  const fst::TransformResult r = fst::transform_detailed(model, train);

  const auto before = fst::evaluate(fst::as_span(r.original), train.labels, train.groups, 2, 0.5);
  const auto after = fst::evaluate(fst::as_span(r.transformed), train.labels, train.groups, 2,
                                   *model.threshold, fst::as_span(r.original));

  std::printf("lambda = (%.6f, %.6f), %d iterations\n", model.dual.lambda(0), model.dual.lambda(1),
              model.dual.iterations);
  std::printf("msp gap  %.4f -> %.4f\n", before.msp_gap, after.msp_gap);
  std::printf("brier    %.4f -> %.4f\n", before.brier, after.brier);
  std::printf("auc      %.4f -> %.4f\n", *before.auc, *after.auc);
  std::printf("cross-entropy to original scores: %.4f\n", *after.cross_entropy);
  return 0;
}
