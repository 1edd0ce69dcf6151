//! Canned text used by bots outside of model generation. None of these may
//! contain the AI-flag tokens ("bot", "ai", "chatgpt", "chatbot").

/// Opening greetings, sent before anything else in a conversation.
pub const GREETINGS: &[&str] = &[
    "hey!",
    "hi there",
    "hello :)",
    "hey, how's it going?",
    "hi! glad we get to chat",
    "heyy",
    "yo, what's up",
    "hello hello",
];

/// Opinion-exchange moves; `{alpha}` is the bot's current choice label.
pub const OPINION_EXCHANGE: &[&str] = &[
    "so which diet did you go with? I picked {alpha}",
    "I'm going with {alpha} on this one. what about you?",
    "what's your pick? I'm leaning {alpha}",
    "I went {alpha}, curious what you chose",
    "honestly {alpha} seems like the best compromise to me. you?",
];

/// Used when every model attempt failed.
pub const FALLBACK_REPLIES: &[&str] = &[
    "hmm, good point, let me think about that for a sec",
    "I get where you're coming from, but I still think {alpha} balances health and climate better",
    "sorry, lost my train of thought. what was your main reason again?",
    "fair, but have you thought about the environmental side of it?",
];

pub const GOODBYES: &[&str] = &[
    "alright, I'm going to head out of this chat now. good talking with you!",
    "I think I've said my piece, going to wrap this up here. take care",
    "ok, I'm going to end the conversation here. thanks for the chat!",
];

pub const REMINDERS: &[&str] = &["you still there?", "hello? still around?", "did you get my last message?"];

/// Stock phrases removed from model replies (matched case-insensitively).
pub const SCRUBBED_PHRASES: &[&str] = &[
    "as an ai language model",
    "great question!",
    "great question,",
    "that's a great point!",
    "that's a great point,",
    "i understand your perspective, but",
    "absolutely!",
    "absolutely,",
    "certainly!",
    "certainly,",
];

/// Parting words that the stub natural-end heuristic recognises.
pub const PARTING_KEYWORDS: &[&str] = &["bye", "gotta go", "see you", "see ya", "goodbye", "talk later"];
