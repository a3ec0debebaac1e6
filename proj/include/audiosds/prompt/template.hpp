#pragma once

#include <string>
#include <string_view>

#include "audiosds/error.hpp"

namespace audiosds {

/// Instruction sent to the LLM that splits a caption into per-channel
/// prompts. Reproduced byte-for-byte; only the caption slot is substituted.
inline constexpr std::string_view kDecompositionTemplate = R"TEMPLATE(I have an audio file (e.g., a .wav) that contains various real-world sounds 
(for example, cars driving by, music playing in the background, cicadas
chirping, and water flowing). I process this audio with a model that generates
a natural language caption describing the sounds present in the audio. I will
provide you with this caption.

I also have a separate source-separation tool that works as follows: I give it
the original audio, along with a list of N text descriptions—one description 
per channel. This tool uses a text-to-audio diffusion model to separate the 
original audio into N channels, each channel corresponding to one of the text 
prompts. The resulting channels, when mixed together, should reconstruct the 
original audio. Each channel’s prompt should describe a distinct element or 
sound source present in the recording.

Your task is to take the caption I provide and generate several examples of 
sets of N text prompts suitable for the source-separation tool. Each example 
should present a plausible partitioning of the audio into N distinct channels, 
reflecting different ways to break down the overall scene. Provide a few 
different examples, each with a unique approach to organizing the sounds into 
N text prompts.

Here is the output caption for my audio: <AUDIO_CAPTION>)TEMPLATE";

inline constexpr std::string_view kCaptionSlot = "<AUDIO_CAPTION>";

inline std::string render_decomposition_template(std::string_view caption) {
  const auto at = kDecompositionTemplate.find(kCaptionSlot);
  if (caption.empty()) throw InvalidInput("caption is empty");
  std::string out(kDecompositionTemplate.substr(0, at));
  out += caption;
  out += kDecompositionTemplate.substr(at + kCaptionSlot.size());
  return out;
}

}  // namespace audiosds
