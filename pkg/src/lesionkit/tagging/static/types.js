// DTOs of the tagging service JSON API. Field names mirror the server
// schemas exactly; the board never invents state beyond these documents.
export {};
