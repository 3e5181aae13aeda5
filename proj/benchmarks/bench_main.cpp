#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <benchmark/benchmark.h>

#include "comve/choice_model.hpp"
#include "comve/corpus_io.hpp"
#include "comve/encoder.hpp"
#include "comve/lm_probe.hpp"
#include "comve/omcs_pretrainer.hpp"
#include "comve/prompt_builder.hpp"

namespace {

using namespace comve;

const std::vector<std::string> kWords = {"the", "cat", "dog", "drinks", "eats", "water",
                                         "milk", "stone", "car", "sings", "a", "tree"};

std::string random_sentence(std::mt19937_64& rng, int words) {
  std::string s;
  for (int i = 0; i < words; ++i) s += (i ? " " : "") + kWords[rng() % kWords.size()];
  return s;
}

TransformerEncoder make_encoder(int hidden, int layers) {
  TransformerConfig cfg;
  cfg.hidden_size = hidden;
  cfg.num_layers = layers;
  cfg.num_heads = 4;
  cfg.ffn_size = hidden * 4;
  cfg.max_positions = 64;
  return TransformerEncoder(cfg, Tokenizer::build(kWords, VocabOptions{}), 1);
}

void BM_EncoderForward(benchmark::State& state) {
  auto enc = make_encoder(static_cast<int>(state.range(0)), 2);
  std::mt19937_64 rng(3);
  const auto input = encode_choice(
      enc, build_validation_input({Task::kValidation, Variant::kP1}, random_sentence(rng, 10)), 32);
  for (auto _ : state) {
    nn::Tape tape;
    benchmark::DoNotOptimize(tape.value(enc.encode(tape, input, {})).sum());
  }
}
BENCHMARK(BM_EncoderForward)->Arg(32)->Arg(64)->Arg(128);

void BM_PllScore(benchmark::State& state) {
  auto enc = make_encoder(64, 2);
  std::mt19937_64 rng(4);
  const std::string s = random_sentence(rng, static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(pll_score(enc, s).total);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_PllScore)->Arg(5)->Arg(10)->Arg(20);

void BM_LoadValidationSet(benchmark::State& state) {
  const auto dir = std::filesystem::temp_directory_path() / "comve_bench_csv";
  std::filesystem::create_directories(dir);
  std::mt19937_64 rng(5);
  {
    std::ofstream data(dir / "data.csv"), answers(dir / "answers.csv");
    data << "id,sent0,sent1\n";
    for (int i = 0; i < state.range(0); ++i) {
      data << i << ",\"" << random_sentence(rng, 8) << ", indeed\"," << random_sentence(rng, 8) << "\n";
      answers << i << "," << (rng() % 2) << "\n";
    }
  }
  const auto map = ColumnMap::validation_default();
  for (auto _ : state) {
    benchmark::DoNotOptimize(load_validation_set(dir / "data.csv", dir / "answers.csv", map).size());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
  std::filesystem::remove_all(dir);
}
BENCHMARK(BM_LoadValidationSet)->Arg(1000)->Arg(10000);

void BM_MaskTokens(benchmark::State& state) {
  const Tokenizer tok = Tokenizer::build(kWords, VocabOptions{});
  const auto vocab = MaskVocabulary::from(tok);
  std::mt19937_64 rng(6);
  std::vector<int> ids(static_cast<std::size_t>(state.range(0)));
  for (auto& id : ids) id = vocab.random_pool[rng() % vocab.random_pool.size()];
  ids.front() = tok.cls_id();
  ids.back() = tok.sep_id();
  const auto special = special_positions(ids, tok);
  MaskingConfig cfg;
  for (auto _ : state) {
    ++cfg.seed;
    benchmark::DoNotOptimize(mask_tokens(ids, cfg, special, vocab).selected.size());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MaskTokens)->Arg(64)->Arg(10000);

}  // namespace
BENCHMARK_MAIN();
