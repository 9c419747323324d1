use super::Source;

/// (concept, hypothesis text, source) in table order; ids are 1-based positions.
pub(super) const GENERIC: [(&str, &str, Source); 31] = [
    ("Surveillance", "The user is facing a data surveillance issue.", Source::Solove),
    ("Interrogation", "The user is forced to provide information.", Source::Solove),
    ("Aggregation", "Personal user information is collected from other sources.", Source::Solove),
    ("Insecurity", "The user is concerned about protecting their personal data.", Source::Solove),
    ("Identification", "A data anonymity topic is discussed.", Source::Solove),
    ("Secondary Use", "The user is concerned about the purposes of personal data access.", Source::Solove),
    ("Exclusion", "The user wants to correct their personal information.", Source::Solove),
    ("Breach of Confidentiality", "A breach of data confidentiality is discussed.", Source::Solove),
    ("Disclosure", "Personal data disclosure is discussed.", Source::Solove),
    ("Exposure", "The app exposes a private aspect of the user life.", Source::Solove),
    ("Increased Accessibility", "User’s data has been made accessible to public.", Source::Solove),
    ("Blackmail", "A data blackmailing issue is discussed.", Source::Solove),
    ("Appropriation", "User data is being exploited for other purposes.", Source::Solove),
    ("Distortion", "False data is presented about the user.", Source::Solove),
    ("Intrusion", "Unwanted intrusion to personal info is discussed.", Source::Solove),
    ("Decisional Interference", "Intrusion by the government to the user’s life is discussed.", Source::Solove),
    ("Notice/Awareness", "Opting out from personal data collection is discussed.", Source::WangKobsa),
    ("Data Minimization", "More access than needed is required.", Source::WangKobsa),
    ("Purpose Specification", "The reason for data access is not provided.", Source::WangKobsa),
    ("Collection Limitation", "Too much personal data is collected.", Source::WangKobsa),
    ("Use Limitation", "The data is being used for unexpected purposes.", Source::WangKobsa),
    ("Onward Transfer", "Data sharing with third parties is discussed.", Source::WangKobsa),
    ("Choice/Consent", "User choice for personal data collection is discussed.", Source::WangKobsa),
    ("Choice/Consent", "User did not allow access to their personal data.", Source::WangKobsa),
    ("Generic Privacy Issues", "A data privacy topic is discussed.", Source::Generic),
    ("Generic Privacy Issues", "Protecting user’s personal data is discussed.", Source::Generic),
    ("Generic Privacy Issues", "This is about a privacy feature.", Source::Generic),
    ("Generic Privacy Issues", "The user is facing a privacy issue.", Source::Generic),
    ("Positive Privacy Issues", "The user likes that data privacy is provided.", Source::Generic),
    ("Positive Privacy Issues", "The user wants privacy.", Source::Generic),
    ("Positive Privacy Issues", "The app has privacy features.", Source::Generic),
];

// Entries 10 and 11 carry identical text in the published taxonomy; both are
// kept so the set has 21 members.
pub(super) const MH_DOMAIN: [(&str, &str, Source); 21] = [
    ("Linkability", "User data being linked across different services.", Source::Iwaya),
    ("Linkability", "Online user activities from various platforms can be connected.", Source::Iwaya),
    ("Linkability", "Personal user information is collected from other sources.", Source::Iwaya),
    ("Identifiability", "Anonymized user data could be used to reveal their identity.", Source::Iwaya),
    ("Identifiability", "Unique digital user data could lead to personal identification.", Source::Iwaya),
    ("Non-repudiation", "User is unable to deny their online actions.", Source::Iwaya),
    ("Non-repudiation", "User is concerned about the permanent storage of their digital transactions.", Source::Iwaya),
    ("Detectability", "User is concerned about others detecting their use of sensitive online services.", Source::Iwaya),
    ("Detectability", "User presence on certain platforms could be discovered from anonymized data.", Source::Iwaya),
    ("Disclosure of information", "User device's communication patterns reveal private information.", Source::Iwaya),
    ("Disclosure of information", "User device's communication patterns reveal private information.", Source::Iwaya),
    ("Disclosure of information", "The app exposes a private aspect of the user life.", Source::Iwaya),
    ("Unawareness", "Unauthorized access to user's private information.", Source::Iwaya),
    ("Unawareness", "The user is not aware of how and why their data is being collected, processed, stored, and shared.", Source::Iwaya),
    ("Non-compliance", "The user is concerned about the processing or storing of their personal data against regulations or privacy policies.", Source::Iwaya),
    ("Non-compliance", "User data is being exploited for other purposes.", Source::Iwaya),
    ("Non-compliance", "Data sharing with third parties is discussed.", Source::Iwaya),
    ("General Privacy Issues", "The user is facing a privacy issue.", Source::Generic),
    ("General Privacy Issues", "The user is concerned about protecting their personal data.", Source::Generic),
    ("General Privacy Issues", "A data anonymity topic is discussed.", Source::Generic),
    ("General Privacy Issues", "A data privacy topic is discussed.", Source::Generic),
];
