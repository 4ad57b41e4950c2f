#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "muse/multitask.hpp"

// Deterministic toy corpora used by the acceptance suite and the gen-toy
// command. Nothing here is meant to resemble real language statistics beyond
// what the experiments need.
namespace muse::synthetic {

struct LanguageLine {
    std::string language;
    std::string text;
};

/// The 16 toy language codes, in generation order.
const std::vector<std::string>& toy_languages();

/// `lines_per_language` sentences for each toy language. Each language owns a
/// script (Latin with its own accents, Cyrillic, Arabic, Thai, Hangul, kana,
/// CJK) and a fixed lexicon; characters follow a Zipf law, so CJK languages
/// carry a long tail of rare characters. Lines are interleaved by language.
std::vector<LanguageLine> multilingual_corpus(std::size_t lines_per_language, std::uint64_t seed);

/// Parallel sentences between a Latin-script toy source language and a
/// Cyrillic "cipher" target: every target word is its source word under a
/// fixed letter substitution, word order kept. Sentences are unique.
std::vector<std::pair<std::string, std::string>> cipher_bitext(std::size_t pairs, std::uint64_t seed);

struct QaQuestion {
    std::string text;
    std::size_t sentence = 0;  // index into the paragraph's sentences
};

struct QaParagraph {
    std::string entity;
    std::vector<std::string> sentences;
    std::vector<QaQuestion> questions;

    [[nodiscard]] std::string text() const;
};

/// One paragraph per invented entity. The first sentence names the entity;
/// every later sentence states one fact about "it", so the sentence alone
/// cannot tell which entity it describes. Each fact gets one question that
/// names the entity.
std::vector<QaParagraph> qa_corpus(std::size_t entities, std::uint64_t seed);

/// qa TrainingExamples (question, answer sentence, paragraph as context).
std::vector<TrainingExample> qa_examples(const std::vector<QaParagraph>& paragraphs, bool with_context);

}  // namespace muse::synthetic
