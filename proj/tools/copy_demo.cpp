// Trains a small pointer-softmax model on the copy task through the library API
// and prints a few greedy decodes. Usage: copy_demo [updates]
#include <cstdio>
#include <cstdlib>
#include <vector>

#include "psx/datasets/synthetic.hpp"
#include "psx/pointer_head/model.hpp"
#include "psx/training/trainer.hpp"

using namespace psx;

int main(int argc, char** argv) {
  const std::size_t updates = argc > 1 ? std::strtoul(argv[1], nullptr, 10) : 2000;

  CopyTaskConfig data;
  data.seed = 1;
  CopyTaskGenerator stream(data);
  data.seed = 2;
  const auto dev = CopyTaskGenerator(data).take(100);

  ModelConfig mc;
  mc.src_vocab = mc.tgt_vocab = data.vocab_size;
  mc.shortlist = data.shortlist;
  mc.embed = mc.hidden = mc.switch_hidden = 32;
  mc.shared_vocab = true;
  PointerSoftmaxModel<float> model(mc);
  ParamStore<float> params;
  model.init_params(params, 1);

  TrainConfig tc;
  tc.batch_size = 32;
  tc.max_updates = updates;
  tc.eval_every = 500;
  tc.learning_rate = 3e-3;
  const auto run = train(model, params, [&] { return stream.next(); }, dev, tc, [](const CurvePoint& p) {
    std::printf("%6zu  train %.4f  dev %.4f\n", p.updates, p.train_nll, p.dev_nll);
  });

  const ParamStore<float>& best = run.best;
  const auto m = evaluate(model, best, dev);
  std::printf("dev token accuracy %.4f, pointer usage %.4f\n", m.token_accuracy, m.pointer_usage);

  std::vector<std::vector<int>> sources;
  for (std::size_t i = 0; i < 3; ++i) sources.push_back(dev[i].source);
  const auto decoded = model.greedy_decode(best, sources, data.seq_len);
  for (std::size_t i = 0; i < sources.size(); ++i) {
    std::printf("src:");
    for (int id : sources[i]) std::printf(" %d", id);
    std::printf("\nout:");
    for (const auto& t : decoded[i]) std::printf(t.kind == DecodedToken::Kind::copy ? " [%d]" : " %d", t.value);
    std::printf("\n");
  }
}
