"""Rhythm-grammar transcription of monophonic performances."""

from ._rhythmiq import (
    BeatGrid,
    NoteEvent,
    Performance,
    RhythmGrammar,
    RhythmiqError,
    RhythmTree,
    ScoreModel,
    TempoBounds,
    TempoEstimate,
    TimeSignature,
    best_rotation_fmeasure,
    default_grammar,
    downbeat_fmeasure,
    emit_musicxml,
    enforce_monophony,
    enumerate_rotations,
    estimate_tempo_ioi,
    exit_code,
    fallback_quantize,
    grid_from_tempo,
    load_beats,
    load_midi,
    note_metrics,
    parse_grammar,
    parse_musicxml,
    quantize,
    render_performance,
    sample_score,
    save_midi,
    score_edit_metrics,
    sdr,
    spell_pitch,
    tempo_bounds,
    train_grammar,
)

__all__ = [name for name in dir() if not name.startswith("_")]
