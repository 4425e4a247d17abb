#include "shuttle/training/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "shuttle/errors.hpp"
#include "shuttle/numerics/ops.hpp"

namespace shuttle::training {

EvalMetrics evaluate(Model& model, std::span<const tasks::SequenceBatch> data) {
  if (data.empty()) throw ContractError("evaluate: empty dataset");
  const bool regression = data.front().regression();
  const std::size_t classes = regression ? 0 : model.config().outputs;
  std::vector<std::size_t> class_hits(classes, 0);
  std::vector<std::size_t> class_total(classes, 0);

  EvalMetrics m;
  double loss_sum = 0.0;
  double entropy_sum = 0.0;
  std::size_t correct = 0;
  for (const auto& batch : data) {
    Tape tape;
    const SequenceOutput out = model.forward(tape, batch, layer::Mode::infer);
    const StepScore sc = score(out, batch);
    loss_sum += sequence_loss(out, batch).value()[0] * static_cast<double>(sc.total);
    entropy_sum += attention_entropy(out) * static_cast<double>(batch.batch());
    correct += sc.correct;
    m.scored += sc.total;
    m.samples += batch.batch();
    if (regression) continue;
    for (std::size_t t = 0; t < out.head.size(); ++t) {
      if (!out.head[t]) continue;
      const Tensor& z = out.head[t]->value();
      for (std::size_t i = 0; i < batch.batch(); ++i) {
        const int y = batch.label(i, t);
        if (y < 0) continue;
        const auto row = z.values().subspan(i * z.cols(), z.cols());
        const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
        ++class_total[static_cast<std::size_t>(y)];
        class_hits[static_cast<std::size_t>(y)] += best == static_cast<std::size_t>(y) ? 1 : 0;
      }
    }
  }
  if (m.scored == 0) throw ContractError("evaluate: dataset carries no scored steps");
  m.accuracy = static_cast<double>(correct) / static_cast<double>(m.scored);
  m.mean_loss = loss_sum / static_cast<double>(m.scored);
  m.attention_entropy = entropy_sum / static_cast<double>(m.samples);
  for (std::size_t c = 0; c < classes; ++c) {
    m.per_class_accuracy.push_back(class_total[c] ? static_cast<double>(class_hits[c]) / static_cast<double>(class_total[c])
                                                  : std::numeric_limits<double>::quiet_NaN());
  }
  return m;
}

std::vector<tasks::SequenceBatch> draw_batches(tasks::SequenceSource& source, std::size_t samples, std::size_t batch) {
  if (batch == 0) throw ContractError("draw_batches: batch size must be >= 1");
  std::vector<tasks::SequenceBatch> out;
  for (std::size_t done = 0; done < samples; done += batch) out.push_back(source.next(std::min(batch, samples - done)));
  return out;
}

}  // namespace shuttle::training
